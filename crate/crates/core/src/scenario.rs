//! Station-averaged comparisons and future/present return-level ratios.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::evd::ReturnLevel;
use crate::fitting::{analyze_series, normal_quantile, AnalysisConfig};
use crate::preprocess;
use crate::series::{DailyRecord, DailySeries};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("present return level must be positive, got {0}")]
    NonPositivePresent(f64),
    #[error("future return level must be positive, got {0}")]
    NonPositiveFuture(f64),
    #[error("no stations to average")]
    NoStations,
}

/// Ratio SEs above this fraction of the ratio are flagged as implausible.
pub const EXTREME_RELATIVE_SE: f64 = 0.5;

/// Daily mean over stations with a value that day, zeros included. A day is
/// missing only when no station reports it.
pub fn station_average_series(site_id: &str, stations: &[DailySeries]) -> Result<DailySeries, ScenarioError> {
    if stations.is_empty() {
        return Err(ScenarioError::NoStations);
    }
    let mut by_day: BTreeMap<chrono::NaiveDate, Vec<f64>> = BTreeMap::new();
    for s in stations {
        for r in s.records() {
            let entry = by_day.entry(r.date).or_default();
            if let Some(v) = r.value {
                entry.push(v);
            }
        }
    }
    let records = by_day
        .into_iter()
        .map(|(date, mut vals)| {
            // sorted summation keeps the mean independent of station order
            vals.sort_by(f64::total_cmp);
            let value = (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
            DailyRecord { date, value }
        })
        .collect();
    let n = stations.len() as f64;
    let lat = stations.iter().map(|s| s.lat).sum::<f64>() / n;
    let lon = stations.iter().map(|s| s.lon).sum::<f64>() / n;
    Ok(DailySeries::new(site_id, lat, lon, None, records).expect("dates come from an ordered map"))
}

/// 100-year (or n-year) return values for one grid cell: (a) from the
/// station-averaged series, (b) from the grid series, (c) mean of the
/// individual station values.
#[derive(Debug, Clone, PartialEq)]
pub struct TripleComparison {
    pub cell_id: String,
    pub lat: f64,
    pub lon: f64,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub c: Option<f64>,
    pub n_stations: usize,
}

impl TripleComparison {
    pub fn ratio_ab(&self) -> Option<f64> {
        Some(self.a? / self.b?)
    }

    pub fn ratio_cb(&self) -> Option<f64> {
        Some(self.c? / self.b?)
    }
}

/// Runs the full chain on the averaged, grid and individual-station series.
/// Only stations passing the missing-data filter enter (a) and (c).
pub fn triple_comparison(
    cell_id: &str,
    stations: &[DailySeries],
    grid: &DailySeries,
    cfg: &AnalysisConfig,
) -> TripleComparison {
    let usable: Vec<DailySeries> = stations
        .iter()
        .filter(|s| {
            let f = preprocess::missing_fraction(s, cfg.season, cfg.years);
            preprocess::passes_missing_filter(f, cfg.missing_cutoff)
        })
        .cloned()
        .collect();
    let level = |s: &DailySeries| analyze_series(s, cfg).ok().map(|r| r.level.value);
    let a = station_average_series(cell_id, &usable).ok().and_then(|avg| level(&avg));
    let b = level(grid);
    let singles: Vec<f64> = usable.iter().filter_map(level).collect();
    let c = (!singles.is_empty()).then(|| singles.iter().sum::<f64>() / singles.len() as f64);
    TripleComparison { cell_id: cell_id.to_string(), lat: grid.lat, lon: grid.lon, a, b, c, n_stations: usable.len() }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioResult {
    pub site_id: String,
    pub ratio: f64,
    pub se: f64,
}

impl RatioResult {
    pub fn relative_se(&self) -> f64 {
        self.se / self.ratio
    }

    pub fn is_extreme(&self) -> bool {
        self.relative_se() > EXTREME_RELATIVE_SE
    }
}

/// `R = future / present` with delta-method SE for independent estimates.
pub fn future_present_ratio(
    site_id: &str,
    future: &ReturnLevel,
    present: &ReturnLevel,
) -> Result<RatioResult, ScenarioError> {
    if !(present.value > 0.0) {
        return Err(ScenarioError::NonPositivePresent(present.value));
    }
    if !(future.value > 0.0) {
        return Err(ScenarioError::NonPositiveFuture(future.value));
    }
    let ratio = future.value / present.value;
    let se = ratio * (future.se / future.value).hypot(present.se / present.value);
    Ok(RatioResult { site_id: site_id.to_string(), ratio, se })
}

/// Two-sided tests of `R = 1` on the plain and log scales.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Significance {
    pub plain: bool,
    pub log: bool,
}

pub fn ratio_significance(r: &RatioResult, alpha: f64) -> Significance {
    let z = normal_quantile(1.0 - alpha / 2.0);
    Significance {
        plain: (r.ratio - 1.0).abs() > z * r.se,
        log: r.ratio.ln().abs() > z * r.se / r.ratio,
    }
}
