use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::PathBuf;

use rand::seq::index;
use rayon::prelude::*;
use thiserror::Error;

use super::config::{ConfigError, PipelineConfig};
use super::data::{load_grid_data, load_station_data, write_table, LoadReport};
use super::svg::{render_map, MapPoint};
use super::{fmt_opt, IoError};
use crate::evd::ReturnLevel;
use crate::fitting::{analyze_series, AnalysisConfig, SiteAnalysis, SiteFailure};
use crate::preprocess;
use crate::regression::{
    aic, build_design, default_candidates, fit_ols, predict_point_return, Covariates, DesignSpec, Grid, GridCell,
    PairedRecord, RegressionFit,
};
use crate::scenario::{future_present_ratio, ratio_significance, triple_comparison};
use crate::series::DailySeries;
use crate::spatial::{
    compare_predictions, empirical_variogram, estimate_sill, universal_krige, KrigingModel, KrigingObs,
    KrigingTarget, LatLon, PredictionComparison, Trend, DEFAULT_MAX_LAG_MILES, DEFAULT_VARIOGRAM_BINS,
};
use crate::synth::rng_from_seed;

pub const STATIONS_FILE: &str = "stations.csv";
pub const DAILY_FILE: &str = "daily.csv";
pub const GRID_FILE: &str = "grid_daily.csv";
/// Optional future-scenario grid data; enables the ratio stage.
pub const FUTURE_GRID_FILE: &str = "grid_future.csv";

const FIT_HEADER: [&str; 17] = [
    "site_id", "lat_deg", "lon_deg", "elev_m", "missing_fraction", "threshold", "n_peaks", "t_years", "mu", "psi",
    "xi", "se_mu", "se_psi", "se_xi", "return_level", "return_level_se", "status",
];

/// Last stage a run executes; each includes all earlier ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    FitStations,
    FitGrid,
    Regress,
    Krige,
    Ratio,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::FitStations => "fit-stations",
            Stage::FitGrid => "fit-grid",
            Stage::Regress => "regress",
            Stage::Krige => "krige",
            Stage::Ratio => "ratio",
            Stage::Report => "report",
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{stage} stage aborted: {reason}")]
    Stage { stage: &'static str, reason: String },
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

fn abort(stage: &'static str, reason: impl Into<String>) -> PipelineError {
    PipelineError::Stage { stage, reason: reason.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ExclusionCause {
    TooManyMissing,
    InsufficientData,
    FitFailed,
    NoGridCell,
    GridFitFailed,
    MissingElevation,
}

impl ExclusionCause {
    pub const ALL: [ExclusionCause; 6] = [
        ExclusionCause::TooManyMissing,
        ExclusionCause::InsufficientData,
        ExclusionCause::FitFailed,
        ExclusionCause::NoGridCell,
        ExclusionCause::GridFitFailed,
        ExclusionCause::MissingElevation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExclusionCause::TooManyMissing => "too_many_missing",
            ExclusionCause::InsufficientData => "insufficient_data",
            ExclusionCause::FitFailed => "fit_failed",
            ExclusionCause::NoGridCell => "no_grid_cell",
            ExclusionCause::GridFitFailed => "grid_fit_failed",
            ExclusionCause::MissingElevation => "missing_elevation",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exclusion {
    pub station_id: String,
    pub cause: ExclusionCause,
    pub detail: String,
    order: usize,
}

/// Summary of a run; the same numbers go to the manifest.
#[derive(Debug, Clone, Default)]
pub struct PipelineReport {
    pub n_stations: usize,
    pub load: LoadReport,
    pub exclusions: Vec<Exclusion>,
    pub n_failed_fits: usize,
    pub n_cells: usize,
    pub n_cells_fitted: usize,
    pub n_paired: usize,
    pub holdout: Vec<String>,
    pub selected: Option<DesignSpec>,
    pub n_kriging_targets: usize,
    /// Kriged / modeled ratios over every target with a model prediction.
    pub comparison: Option<PredictionComparison>,
    /// The same restricted to holdout stations.
    pub holdout_comparison: Option<PredictionComparison>,
    pub n_triples: usize,
    pub n_ratios: usize,
    pub n_extreme_se: usize,
    pub notes: Vec<String>,
    pub files: Vec<PathBuf>,
}

impl PipelineReport {
    pub fn excluded(&self, cause: ExclusionCause) -> usize {
        self.exclusions.iter().filter(|e| e.cause == cause).count()
    }
}

fn clean(s: &str) -> String {
    s.replace(',', ";")
}

fn fit_row(s: &DailySeries, cfg: &AnalysisConfig, res: &Result<SiteAnalysis, SiteFailure>) -> Vec<String> {
    let mf = preprocess::missing_fraction(s, cfg.season, cfg.years);
    let mut row = vec![s.site_id.clone(), fmt_opt(Some(s.lat)), fmt_opt(Some(s.lon)), fmt_opt(s.elev), fmt_opt(Some(mf))];
    match res {
        Ok(a) => {
            let p = a.fit.params;
            let se = a.fit.std_errors();
            row.extend([
                fmt_opt(Some(a.exceedances.threshold)),
                a.fit.n_peaks.to_string(),
                fmt_opt(Some(a.exceedances.t_years)),
                fmt_opt(Some(p.mu)),
                fmt_opt(Some(p.psi)),
                fmt_opt(Some(p.xi)),
                fmt_opt(Some(se[0])),
                fmt_opt(Some(se[1])),
                fmt_opt(Some(se[2])),
                fmt_opt(Some(a.level.value)),
                fmt_opt(Some(a.level.se)),
                "ok".into(),
            ]);
        }
        Err(e) => {
            row.extend(std::iter::repeat_n("NA".to_string(), 11));
            row.push(clean(&e.to_string()));
        }
    }
    row
}

fn cause_of(f: &SiteFailure) -> ExclusionCause {
    match f {
        SiteFailure::TooManyMissing(_) => ExclusionCause::TooManyMissing,
        SiteFailure::InsufficientData(_) => ExclusionCause::InsufficientData,
        SiteFailure::FitFailed(_) => ExclusionCause::FitFailed,
    }
}

fn level_of(p: &crate::regression::PointPrediction, n: f64) -> ReturnLevel {
    ReturnLevel { value: p.level, se: p.se_level, n }
}

struct Run<'a> {
    cfg: &'a PipelineConfig,
    until: Stage,
    report: PipelineReport,
}

impl Run<'_> {
    fn out(&self, name: &str) -> PathBuf {
        self.cfg.out_dir.join(name)
    }

    fn table(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), PipelineError> {
        let path = self.out(name);
        write_table(&path, header, rows)?;
        self.report.files.push(path);
        Ok(())
    }

    fn exclude(&mut self, order: usize, station_id: &str, cause: ExclusionCause, detail: String) {
        self.report.exclusions.push(Exclusion { station_id: station_id.to_string(), cause, detail, order });
    }

    fn execute(&mut self) -> Result<(), PipelineError> {
        let cfg = self.cfg;
        let acfg = cfg.analysis();
        let n_ret = cfg.return_period;

        // stations: preprocess and fit
        let (stations, load) =
            load_station_data(&cfg.data_dir.join(STATIONS_FILE), &cfg.data_dir.join(DAILY_FILE))?;
        self.report.n_stations = stations.len();
        self.report.load = load;
        if stations.is_empty() {
            return Err(abort("load", "no station series"));
        }
        let results: Vec<Result<SiteAnalysis, SiteFailure>> =
            stations.par_iter().map(|s| analyze_series(s, &acfg)).collect();
        let rows: Vec<_> = stations.iter().zip(&results).map(|(s, r)| fit_row(s, &acfg, r)).collect();
        self.table("station_fits.csv", &FIT_HEADER, &rows)?;
        for (i, (s, r)) in stations.iter().zip(&results).enumerate() {
            if let Err(f) = r {
                self.exclude(i, &s.site_id, cause_of(f), f.to_string());
            }
        }
        self.report.n_failed_fits = self.report.excluded(ExclusionCause::FitFailed);
        if self.report.excluded(ExclusionCause::TooManyMissing) == stations.len() {
            return Err(abort(
                "preprocess",
                format!("all {} stations exceed the missing-data cutoff {}", stations.len(), cfg.missing_cutoff),
            ));
        }
        if results.iter().all(Result::is_err) {
            return Err(abort("fit-stations", "no station produced a usable fit"));
        }
        if self.until == Stage::FitStations {
            return Ok(());
        }

        // grid cells
        let (cells, gload) = load_grid_data(&cfg.data_dir.join(GRID_FILE))?;
        self.report.load.merge(gload);
        self.report.n_cells = cells.len();
        if cells.is_empty() {
            return Err(abort("fit-grid", "no grid cells"));
        }
        let cell_results: Vec<Result<SiteAnalysis, SiteFailure>> =
            cells.par_iter().map(|c| analyze_series(c, &acfg)).collect();
        let rows: Vec<_> = cells.iter().zip(&cell_results).map(|(c, r)| fit_row(c, &acfg, r)).collect();
        self.table("grid_fits.csv", &FIT_HEADER, &rows)?;
        self.report.n_cells_fitted = cell_results.iter().filter(|r| r.is_ok()).count();
        if self.report.n_cells_fitted == 0 {
            return Err(abort("fit-grid", "no grid cell produced a usable fit"));
        }
        if self.until == Stage::FitGrid {
            return Ok(());
        }

        // pair stations with cells
        let grid = Grid {
            spacing: cfg.grid_spacing,
            cells: cells.iter().map(|c| GridCell { cell_id: c.site_id.clone(), lat: c.lat, lon: c.lon }).collect(),
        };
        let mut paired: Vec<PairedRecord> = Vec::new();
        for (i, (s, r)) in stations.iter().zip(&results).enumerate() {
            let Ok(a) = r else { continue };
            let ci = match grid.locate(s.lat, s.lon) {
                Ok(ci) => ci,
                Err(e) => {
                    self.exclude(i, &s.site_id, ExclusionCause::NoGridCell, e.to_string());
                    continue;
                }
            };
            let ca = match &cell_results[ci] {
                Ok(ca) => ca,
                Err(f) => {
                    self.exclude(i, &s.site_id, ExclusionCause::GridFitFailed, format!("cell {}: {f}", cells[ci].site_id));
                    continue;
                }
            };
            let Some(elev) = s.elev else {
                self.exclude(i, &s.site_id, ExclusionCause::MissingElevation, "no elevation in metadata".into());
                continue;
            };
            paired.push(PairedRecord {
                station_id: s.site_id.clone(),
                cell_id: cells[ci].site_id.clone(),
                y_point: a.level.value,
                x_grid: ca.level.value,
                elev,
                lat: s.lat,
                lon: s.lon,
            });
        }
        self.report.n_paired = paired.len();
        if paired.is_empty() {
            return Err(abort("pair", "no station could be paired with a fitted grid cell"));
        }
        let n_hold = (cfg.holdout_fraction * paired.len() as f64).round() as usize;
        let mut hold = vec![false; paired.len()];
        for i in index::sample(&mut rng_from_seed(cfg.seed), paired.len(), n_hold) {
            hold[i] = true;
        }
        self.report.holdout = paired.iter().zip(&hold).filter(|(_, h)| **h).map(|(p, _)| p.station_id.clone()).collect();
        let training: Vec<PairedRecord> = paired.iter().zip(&hold).filter(|(_, h)| !**h).map(|(p, _)| p.clone()).collect();
        let rows: Vec<_> = paired
            .iter()
            .zip(&hold)
            .map(|(p, h)| {
                vec![
                    p.station_id.clone(),
                    p.cell_id.clone(),
                    fmt_opt(Some(p.y_point)),
                    fmt_opt(Some(p.x_grid)),
                    fmt_opt(Some(p.elev)),
                    fmt_opt(Some(p.lat)),
                    fmt_opt(Some(p.lon)),
                    u8::from(*h).to_string(),
                ]
            })
            .collect();
        self.table("pairs.csv", &["station_id", "cell_id", "y_point", "x_grid", "elev_m", "lat_deg", "lon_deg", "holdout"], &rows)?;

        // regression
        let candidates = default_candidates();
        let fits: Vec<_> = candidates.iter().map(|s| build_design(&training, s).and_then(|d| fit_ols(&d))).collect();
        let aics: Vec<Option<f64>> = fits.iter().map(|f| f.as_ref().ok().and_then(|f| aic(f).ok())).collect();
        let chosen = if cfg.auto_select {
            aics.iter()
                .enumerate()
                .filter_map(|(i, a)| a.map(|a| (i, a)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(i, _)| i)
                .ok_or_else(|| abort("regress", "no candidate model has a finite AIC"))?
        } else {
            candidates.iter().position(|s| s.latlon_degree == cfg.degree).expect("degree validated")
        };
        let fit: RegressionFit = fits[chosen].clone().map_err(|e| abort("regress", e.to_string()))?;
        self.report.selected = Some(fit.spec);
        let rows: Vec<_> = candidates
            .iter()
            .zip(&aics)
            .enumerate()
            .map(|(i, (s, a))| {
                vec![s.latlon_degree.to_string(), s.n_columns().to_string(), fmt_opt(*a), u8::from(i == chosen).to_string()]
            })
            .collect();
        self.table("aic_table.csv", &["degree", "n_columns", "aic", "selected"], &rows)?;
        let rows: Vec<_> = fit
            .term_names()
            .iter()
            .zip(fit.coeffs.iter().zip(&fit.coeff_ses))
            .map(|(t, (b, se))| {
                vec![cfg.season.code().into(), cfg.percentile.to_string(), t.clone(), fmt_opt(Some(*b)), fmt_opt(Some(*se))]
            })
            .collect();
        self.table("coefficients.csv", &["season", "percentile", "term", "estimate", "se"], &rows)?;
        let locs: Vec<LatLon> = training.iter().map(|p| LatLon::new(p.lat, p.lon)).collect();
        let vg = empirical_variogram(&fit.residuals, &locs, DEFAULT_MAX_LAG_MILES, DEFAULT_VARIOGRAM_BINS);
        let rows: Vec<_> = vg
            .bins
            .iter()
            .map(|b| vec![fmt_opt(Some(b.center())), fmt_opt(b.semivariance), b.pairs.to_string()])
            .collect();
        self.table("variogram.csv", &["bin_center_miles", "semivariance", "pairs"], &rows)?;
        if self.until == Stage::Regress {
            return Ok(());
        }

        // kriging at holdout and excluded stations
        let predict_at = |s: &DailySeries, elev: f64| -> Option<f64> {
            let ci = grid.locate(s.lat, s.lon).ok()?;
            let ca = cell_results[ci].as_ref().ok()?;
            let c = Covariates { x_grid: ca.level.value, elev, lat: s.lat, lon: s.lon };
            Some(predict_point_return(&fit, &c).level)
        };
        let held: HashSet<String> = self.report.holdout.iter().cloned().collect();
        let excluded: HashSet<String> = self.report.exclusions.iter().map(|e| e.station_id.clone()).collect();
        let mut targets = Vec::new();
        let mut skipped = 0usize;
        for s in &stations {
            if !held.contains(&s.site_id) && !excluded.contains(&s.site_id) {
                continue;
            }
            match s.elev {
                Some(elev) => targets.push((s, KrigingTarget { site_id: s.site_id.clone(), loc: LatLon::new(s.lat, s.lon), elev })),
                None => skipped += 1,
            }
        }
        if skipped > 0 {
            self.report.notes.push(format!("{skipped} kriging targets skipped for lack of elevation"));
        }
        self.report.n_kriging_targets = targets.len();
        let obs: Vec<KrigingObs> = training
            .iter()
            .map(|p| KrigingObs { site_id: p.station_id.clone(), loc: LatLon::new(p.lat, p.lon), elev: p.elev, value: p.y_point })
            .collect();
        let preds = if targets.is_empty() {
            self.report.notes.push("no kriging targets".into());
            Vec::new()
        } else {
            let sill = estimate_sill(&obs, Trend::LatLonElev).map_err(|e| abort("krige", e.to_string()))?;
            let model = KrigingModel::new(sill, cfg.range_miles, 0.0, Trend::LatLonElev)
                .map_err(|e| abort("krige", e.to_string()))?;
            let t: Vec<KrigingTarget> = targets.iter().map(|(_, t)| t.clone()).collect();
            universal_krige(&obs, &t, &model).map_err(|e| abort("krige", e.to_string()))?
        };
        let rows: Vec<_> = preds.iter().map(|p| vec![p.site_id.clone(), fmt_opt(Some(p.prediction)), fmt_opt(Some(p.se))]).collect();
        self.table("kriging.csv", &["site_id", "prediction", "se"], &rows)?;
        let mut all = (Vec::new(), Vec::new());
        let mut holdout_only = (Vec::new(), Vec::new());
        for ((s, t), p) in targets.iter().zip(&preds) {
            if let Some(m) = predict_at(s, t.elev) {
                all.0.push(p.clone());
                all.1.push((p.site_id.clone(), m));
                if held.contains(&p.site_id) {
                    holdout_only.0.push(p.clone());
                    holdout_only.1.push((p.site_id.clone(), m));
                }
            }
        }
        let cmp = compare_predictions(&all.0, &all.1).map_err(|e| abort("krige", e.to_string()))?;
        let rows: Vec<_> = cmp
            .sites
            .iter()
            .map(|s| {
                vec![
                    s.site_id.clone(),
                    fmt_opt(Some(s.kriged)),
                    fmt_opt(Some(s.modeled)),
                    fmt_opt(s.ratio),
                    u8::from(held.contains(&s.site_id)).to_string(),
                ]
            })
            .collect();
        self.table("krige_comparison.csv", &["site_id", "kriged", "modeled", "ratio", "holdout"], &rows)?;
        self.report.comparison = Some(cmp);
        self.report.holdout_comparison =
            Some(compare_predictions(&holdout_only.0, &holdout_only.1).map_err(|e| abort("krige", e.to_string()))?);
        if self.until == Stage::Krige {
            return Ok(());
        }

        // future / present ratios
        let fpath = cfg.data_dir.join(FUTURE_GRID_FILE);
        if fpath.exists() {
            let (fcells, fload) = load_grid_data(&fpath)?;
            self.report.load.merge(fload);
            let facfg = cfg.future_analysis();
            let fres: Vec<Result<SiteAnalysis, SiteFailure>> =
                fcells.par_iter().map(|c| analyze_series(c, &facfg)).collect();
            let rows: Vec<_> = fcells.iter().zip(&fres).map(|(c, r)| fit_row(c, &facfg, r)).collect();
            self.table("grid_future_fits.csv", &FIT_HEADER, &rows)?;
            let future: HashMap<&str, f64> = fcells
                .iter()
                .zip(&fres)
                .filter_map(|(c, r)| r.as_ref().ok().map(|a| (c.site_id.as_str(), a.level.value)))
                .collect();
            let mut rows = Vec::new();
            for p in &paired {
                let Some(&xf) = future.get(p.cell_id.as_str()) else { continue };
                let present = predict_point_return(&fit, &Covariates::from(p));
                let fut = predict_point_return(&fit, &Covariates { x_grid: xf, ..Covariates::from(p) });
                let Ok(r) = future_present_ratio(&p.station_id, &level_of(&fut, n_ret), &level_of(&present, n_ret)) else {
                    continue;
                };
                let sig = ratio_significance(&r, cfg.alpha);
                if r.is_extreme() {
                    self.report.n_extreme_se += 1;
                }
                rows.push(vec![
                    r.site_id.clone(),
                    fmt_opt(Some(r.ratio)),
                    fmt_opt(Some(r.se)),
                    u8::from(sig.plain).to_string(),
                    u8::from(sig.log).to_string(),
                ]);
            }
            self.report.n_ratios = rows.len();
            self.table("ratios.csv", &["site_id", "ratio", "se", "sig_plain", "sig_log"], &rows)?;
            if rows.is_empty() {
                return Err(abort("ratio", "no station has both present and future grid fits"));
            }
        } else {
            self.report.notes.push(format!("ratio stage skipped: {FUTURE_GRID_FILE} not found"));
        }
        if self.until == Stage::Ratio {
            return Ok(());
        }

        // station-averaged comparison and map
        let mut by_cell: Vec<Vec<DailySeries>> = vec![Vec::new(); cells.len()];
        for s in &stations {
            if let Ok(ci) = grid.locate(s.lat, s.lon) {
                by_cell[ci].push(s.clone());
            }
        }
        let triples: Vec<_> = cells
            .par_iter()
            .zip(by_cell.par_iter())
            .filter_map(|(c, ss)| {
                let usable = ss
                    .iter()
                    .filter(|s| {
                        preprocess::passes_missing_filter(preprocess::missing_fraction(s, cfg.season, cfg.years), cfg.missing_cutoff)
                    })
                    .count();
                (usable >= cfg.triple_min_stations).then(|| triple_comparison(&c.site_id, ss, c, &acfg))
            })
            .collect();
        self.report.n_triples = triples.len();
        let rows: Vec<_> = triples
            .iter()
            .map(|t| {
                vec![
                    t.cell_id.clone(),
                    fmt_opt(Some(t.lat)),
                    fmt_opt(Some(t.lon)),
                    fmt_opt(t.a),
                    fmt_opt(t.b),
                    fmt_opt(t.c),
                    fmt_opt(t.ratio_ab()),
                    fmt_opt(t.ratio_cb()),
                    t.n_stations.to_string(),
                ]
            })
            .collect();
        self.table(
            "triples.csv",
            &["cell_id", "lat_deg", "lon_deg", "a_station_average", "b_grid", "c_station_mean", "ratio_ab", "ratio_cb", "n_stations"],
            &rows,
        )?;
        let points: Vec<MapPoint> = stations
            .iter()
            .zip(&results)
            .filter_map(|(s, r)| r.as_ref().ok().map(|a| MapPoint { lat: s.lat, lon: s.lon, value: a.level.value }))
            .collect();
        let path = self.out("station_levels.svg");
        let title = format!("{}-year {} return levels (tenths of mm)", cfg.return_period, cfg.season);
        render_map(&points, &title, &path)?;
        self.report.files.push(path);
        Ok(())
    }

    fn finish(&mut self, aborted: Option<&PipelineError>) -> Result<(), PipelineError> {
        self.report.exclusions.sort_by_key(|e| e.order);
        let rows: Vec<_> = self
            .report
            .exclusions
            .iter()
            .map(|e| vec![e.station_id.clone(), e.cause.name().into(), clean(&e.detail)])
            .collect();
        self.table("exclusions.csv", &["station_id", "cause", "detail"], &rows)?;
        let path = self.out("manifest.txt");
        std::fs::write(&path, self.manifest(aborted)).map_err(|e| IoError::io(&path, e))?;
        Ok(())
    }

    fn manifest(&self, aborted: Option<&PipelineError>) -> String {
        let r = &self.report;
        let mut s = String::from("# run manifest; the key=value lines are a loadable config\n");
        writeln!(s, "# stage: {}", self.until.name()).unwrap();
        s.push_str(&self.cfg.to_text());
        let mut c = |k: &str, v: String| writeln!(s, "# {k}: {v}").unwrap();
        c("stations_loaded", r.n_stations.to_string());
        c("rows_read", r.load.rows.to_string());
        c("rows_rejected", r.load.rejected.len().to_string());
        c("load_warnings", r.load.warnings.len().to_string());
        c("excluded_total", r.exclusions.len().to_string());
        for cause in ExclusionCause::ALL {
            c(&format!("excluded_{}", cause.name()), r.excluded(cause).to_string());
        }
        c("failed_fits", r.n_failed_fits.to_string());
        c("cells_loaded", r.n_cells.to_string());
        c("cells_fitted", r.n_cells_fitted.to_string());
        c("paired_stations", r.n_paired.to_string());
        c("holdout_stations", r.holdout.len().to_string());
        c("selected_degree", r.selected.map_or("NA".into(), |s| s.latlon_degree.to_string()));
        c("kriging_targets", r.n_kriging_targets.to_string());
        if let Some(cmp) = &r.comparison {
            c("krige_ratio_q05", fmt_opt(cmp.q05));
            c("krige_ratio_q50", fmt_opt(cmp.q50));
            c("krige_ratio_q95", fmt_opt(cmp.q95));
        }
        if let Some(cmp) = &r.holdout_comparison {
            c("holdout_ratio_q50", fmt_opt(cmp.q50));
        }
        c("triples", r.n_triples.to_string());
        c("ratios", r.n_ratios.to_string());
        c("extreme_ratio_se", r.n_extreme_se.to_string());
        for n in &r.notes {
            c("note", n.clone());
        }
        if let Some(e) = aborted {
            c("aborted", e.to_string());
        }
        s
    }
}

/// Runs every stage up to and including `until`, writing CSV outputs,
/// `exclusions.csv` and `manifest.txt` into the output directory. The
/// exclusion report and manifest are written even when a stage aborts.
pub fn run_pipeline(cfg: &PipelineConfig, until: Stage) -> Result<PipelineReport, PipelineError> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| IoError::io(&cfg.out_dir, e))?;
    let mut run = Run { cfg, until, report: PipelineReport::default() };
    let result = run.execute();
    run.finish(result.as_ref().err())?;
    result.map(|()| run.report)
}

