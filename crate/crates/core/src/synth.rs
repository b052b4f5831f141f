//! Synthetic data with known extreme value parameters.
//!
//! All generators use `ChaCha8Rng::seed_from_u64(seed)`, so a given seed
//! produces the same data on every platform.

use rand::distr::Open01;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use thiserror::Error;

use crate::evd::{GevParams, XI_EPS};
use crate::series::{DailyRecord, DailySeries, Season, YearRange};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("expected exceedance count {0} is not positive and finite")]
    Degenerate(f64),
    #[error("invalid synthetic configuration: {0}")]
    Config(String),
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Level exceeded `rate` times per year on average under `truth`.
pub fn tail_threshold(truth: &GevParams, rate: f64) -> f64 {
    if truth.xi.abs() < XI_EPS {
        truth.mu - truth.psi * rate.ln()
    } else {
        truth.mu + truth.psi * (-truth.xi * rate.ln()).exp_m1() / truth.xi
    }
}

/// Draws one generalized Pareto excess by inverse transform.
fn gpd_excess<R: Rng + ?Sized>(rng: &mut R, sigma: f64, xi: f64) -> f64 {
    let v: f64 = rng.sample(Open01);
    let log_tail = v.ln();
    if xi.abs() < XI_EPS {
        -sigma * log_tail
    } else {
        sigma * (-xi * log_tail).exp_m1() / xi
    }
}

/// Exceedances of `u` over `t_years` from the point process with parameters `truth`.
pub fn simulate_pp_exceedances(truth: &GevParams, u: f64, t_years: f64, seed: u64) -> Result<Vec<f64>, SynthError> {
    simulate_pp_exceedances_with(&mut rng_from_seed(seed), truth, u, t_years)
}

pub fn simulate_pp_exceedances_with<R: Rng + ?Sized>(
    rng: &mut R,
    truth: &GevParams,
    u: f64,
    t_years: f64,
) -> Result<Vec<f64>, SynthError> {
    let lambda = t_years * truth.exceedance_rate(u);
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(SynthError::Degenerate(lambda));
    }
    let n = Poisson::new(lambda).map_err(|_| SynthError::Degenerate(lambda))?.sample(rng) as usize;
    let sigma = truth.psi + truth.xi * (u - truth.mu);
    Ok((0..n).map(|_| u + gpd_excess(rng, sigma, truth.xi)).collect())
}

/// Settings for one synthetic daily series.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub site_id: String,
    pub lat: f64,
    pub lon: f64,
    pub elev: Option<f64>,
    pub truth: GevParams,
    /// Fraction of days at or below the tail threshold.
    pub threshold_quantile: f64,
    pub years: YearRange,
    /// `None` generates every calendar day with the same parameters.
    pub season: Option<Season>,
    /// Probability that a non-exceedance day is dry.
    pub dry_prob: f64,
    pub missing_rate: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn new(truth: GevParams, years: YearRange, season: Option<Season>, seed: u64) -> Self {
        SynthConfig {
            site_id: "synth".into(),
            lat: 35.0,
            lon: -97.5,
            elev: None,
            truth,
            threshold_quantile: 0.95,
            years,
            season,
            dry_prob: 0.6,
            missing_rate: 0.0,
            seed,
        }
    }

    /// Tail threshold for `season`: the level whose yearly exceedance rate is
    /// `(1 - q)` times the season length.
    pub fn tail_threshold(&self, season: Season) -> f64 {
        tail_threshold(&self.truth, (1.0 - self.threshold_quantile) * season.length_days())
    }
}

/// Daily series with a two-part body (dry days, uniform wet amounts below the
/// tail threshold) and Poisson-count tail exceedances placed on random days.
/// Values are whole tenths of a millimeter.
pub fn simulate_daily_series(cfg: &SynthConfig) -> Result<DailySeries, SynthError> {
    if !(cfg.threshold_quantile > 0.0 && cfg.threshold_quantile < 1.0) {
        return Err(SynthError::Config(format!("threshold quantile {}", cfg.threshold_quantile)));
    }
    if !(0.0..1.0).contains(&cfg.missing_rate) || !(0.0..=1.0).contains(&cfg.dry_prob) {
        return Err(SynthError::Config("rates must lie in [0, 1)".into()));
    }
    let mut rng = rng_from_seed(cfg.seed);
    let seasons: Vec<Season> = match cfg.season {
        Some(s) => vec![s],
        None => Season::ALL.to_vec(),
    };
    let mut records = Vec::new();
    for year in cfg.years.iter() {
        for &season in &seasons {
            let u = cfg.tail_threshold(season);
            let (start, end) = season.bounds(year);
            let days: Vec<_> = start.iter_days().take_while(|d| *d <= end).collect();
            let mean = cfg.truth.exceedance_rate(u) * days.len() as f64 / season.length_days();
            let n = Poisson::new(mean).map_err(|_| SynthError::Degenerate(mean))?.sample(&mut rng) as usize;
            let n = n.min(days.len());
            let mut exceed = vec![false; days.len()];
            for i in index::sample(&mut rng, days.len(), n) {
                exceed[i] = true;
            }
            let sigma = cfg.truth.psi + cfg.truth.xi * (u - cfg.truth.mu);
            for (date, is_exceed) in days.into_iter().zip(exceed) {
                let value = if is_exceed {
                    (u + gpd_excess(&mut rng, sigma, cfg.truth.xi)).ceil()
                } else if rng.random::<f64>() < cfg.dry_prob {
                    0.0
                } else {
                    (rng.random::<f64>() * u.max(0.0)).floor()
                };
                let value = if rng.random::<f64>() < cfg.missing_rate { None } else { Some(value) };
                records.push(DailyRecord { date, value });
            }
        }
    }
    DailySeries::new(cfg.site_id.clone(), cfg.lat, cfg.lon, cfg.elev, records)
        .map_err(|e| SynthError::Config(e.to_string()))
}

/// Settings for a synthetic station network on a regular grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub n_stations: usize,
    pub n_lat: usize,
    pub n_lon: usize,
    /// Center of the south-west cell.
    pub origin: (f64, f64),
    pub spacing: f64,
    pub years: YearRange,
    pub future_years: Option<YearRange>,
    pub missing_rate: f64,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            n_stations: 50,
            n_lat: 2,
            n_lon: 2,
            origin: (35.0, -97.5),
            spacing: 2.5,
            years: YearRange { first: 1950, last: 1999 },
            future_years: None,
            missing_rate: 0.0,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub stations: Vec<DailySeries>,
    pub cells: Vec<DailySeries>,
    pub future_cells: Vec<DailySeries>,
}

/// Smooth spatial multiplier for the station tail.
fn station_field(lat: f64, lon: f64) -> f64 {
    1.0 + 0.15 * (0.5 * lat).sin() + 0.1 * (0.4 * lon).cos()
}

fn station_truth(lat: f64, lon: f64, elev: f64) -> GevParams {
    let f = station_field(lat, lon) * (-2e-4 * elev).exp();
    GevParams { mu: 450.0 * f, psi: 180.0 * f, xi: 0.1 }
}

/// Grid cells carry a damped version of the station field.
fn cell_truth(lat: f64, lon: f64, scale: f64) -> GevParams {
    let f = 0.55 * scale * station_field(lat, lon);
    GevParams { mu: 450.0 * f, psi: 150.0 * f, xi: 0.08 }
}

/// Stations spread round-robin over the cells, every series generated for all
/// seasons. Cell ids are `c00`, `c01`, ...; station ids `s000`, `s001`, ...
pub fn simulate_network(cfg: &NetworkConfig) -> Result<Network, SynthError> {
    let mut rng = rng_from_seed(cfg.seed);
    let n_cells = cfg.n_lat * cfg.n_lon;
    if n_cells == 0 {
        return Err(SynthError::Config("grid has no cells".into()));
    }
    let center = |c: usize| {
        let (i, j) = (c / cfg.n_lon, c % cfg.n_lon);
        (cfg.origin.0 + i as f64 * cfg.spacing, cfg.origin.1 + j as f64 * cfg.spacing)
    };
    let mut stations = Vec::with_capacity(cfg.n_stations);
    for s in 0..cfg.n_stations {
        let (clat, clon) = center(s % n_cells);
        let lat = clat + (rng.random::<f64>() - 0.5) * 0.9 * cfg.spacing;
        let lon = clon + (rng.random::<f64>() - 0.5) * 0.9 * cfg.spacing;
        let elev = (rng.random::<f64>() * 1500.0).round();
        let truth = station_truth(lat, lon, elev);
        let mut sc = SynthConfig::new(truth, cfg.years, None, rng.random());
        sc.site_id = format!("s{s:03}");
        sc.lat = (lat * 1e4).round() / 1e4;
        sc.lon = (lon * 1e4).round() / 1e4;
        sc.elev = Some(elev);
        sc.missing_rate = cfg.missing_rate;
        stations.push(simulate_daily_series(&sc)?);
    }
    let mut make_cells = |years: YearRange, scale: f64| -> Result<Vec<DailySeries>, SynthError> {
        (0..n_cells)
            .map(|c| {
                let (lat, lon) = center(c);
                let mut sc = SynthConfig::new(cell_truth(lat, lon, scale), years, None, rng.random());
                sc.site_id = format!("c{c:02}");
                sc.lat = lat;
                sc.lon = lon;
                sc.dry_prob = 0.4;
                simulate_daily_series(&sc)
            })
            .collect()
    };
    let cells = make_cells(cfg.years, 1.0)?;
    let future_cells = match cfg.future_years {
        Some(fy) => make_cells(fy, 1.2)?,
        None => Vec::new(),
    };
    Ok(Network { stations, cells, future_cells })
}
