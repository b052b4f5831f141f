//! From raw daily series to seasonal threshold exceedances.

use thiserror::Error;

use crate::series::{DailySeries, Season, YearRange};

/// Default cutoff on the fraction of missing days in a season.
pub const DEFAULT_MISSING_CUTOFF: f64 = 0.1;

/// Minimum non-missing observations for a percentile threshold.
pub const MIN_THRESHOLD_OBS: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreprocessError {
    #[error("need at least {needed} observations, found {found}")]
    InsufficientData { needed: usize, found: usize },
    #[error("percentile {0} outside (0, 1)")]
    Percentile(f64),
    #[error("missing fraction {fraction:.4} exceeds cutoff {cutoff}")]
    TooManyMissing { fraction: f64, cutoff: f64 },
    #[error("no observed days in season")]
    NoObservedDays,
}

/// Peaks over a threshold for one site and season.
#[derive(Debug, Clone, PartialEq)]
pub struct SeasonalExceedances {
    pub site_id: String,
    pub season: Season,
    pub threshold: f64,
    pub peaks: Vec<f64>,
    /// Observed period in season-years.
    pub t_years: f64,
    pub n_obs_days: usize,
    pub missing_fraction: f64,
}

/// Days of `series` in `season` whose season-year lies in `years`.
pub fn extract_season(series: &DailySeries, season: Season, years: YearRange) -> DailySeries {
    series.filtered(|r| {
        let (s, y) = Season::of_date(r.date);
        s == season && years.contains(y)
    })
}

/// Fraction of expected season days that are missing or absent from the series.
pub fn missing_fraction(series: &DailySeries, season: Season, years: YearRange) -> f64 {
    let expected = season.days_in(years);
    let observed = extract_season(series, season, years).observed_count();
    missing_fraction_from_counts(expected.saturating_sub(observed), expected)
}

pub fn missing_fraction_from_counts(missing: usize, expected: usize) -> f64 {
    if expected == 0 {
        return 1.0;
    }
    missing as f64 / expected as f64
}

/// Inclusive: a fraction equal to the cutoff passes.
pub fn passes_missing_filter(fraction: f64, cutoff: f64) -> bool {
    fraction <= cutoff
}

/// Ceiling order statistic: the smallest value with at least a fraction `p` of
/// non-missing observations at or below it. Zeros count; missing days do not.
pub fn percentile_threshold(series: &DailySeries, p: f64) -> Result<f64, PreprocessError> {
    let values: Vec<f64> = series.observed_values().collect();
    percentile_of(values, p)
}

pub(crate) fn percentile_of(mut values: Vec<f64>, p: f64) -> Result<f64, PreprocessError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(PreprocessError::Percentile(p));
    }
    let m = values.len();
    if m < MIN_THRESHOLD_OBS {
        return Err(PreprocessError::InsufficientData { needed: MIN_THRESHOLD_OBS, found: m });
    }
    values.sort_by(f64::total_cmp);
    // guard against p*m landing a hair above an integer
    let rank = ((p * m as f64) - 1e-9).ceil().max(1.0) as usize;
    Ok(values[rank.min(m) - 1])
}

/// Cluster maxima of exceedances (`value > u`). A run ends at a non-exceedance,
/// a missing day, a gap in the dates, or a change of season or season-year.
pub fn decluster_runs(series: &DailySeries, u: f64) -> Vec<f64> {
    let mut peaks = Vec::new();
    let mut current: Option<f64> = None;
    let mut prev: Option<(chrono::NaiveDate, (Season, i32))> = None;
    for r in series.records() {
        let key = Season::of_date(r.date);
        let continues = prev.is_some_and(|(d, k)| k == key && d.succ_opt() == Some(r.date));
        if !continues {
            if let Some(m) = current.take() {
                peaks.push(m);
            }
        }
        match r.value {
            Some(v) if v > u => current = Some(current.map_or(v, |m: f64| m.max(v))),
            _ => {
                if let Some(m) = current.take() {
                    peaks.push(m);
                }
            }
        }
        prev = Some((r.date, key));
    }
    if let Some(m) = current {
        peaks.push(m);
    }
    peaks
}

/// Number of individual days strictly above `u`.
pub fn exceedance_count(series: &DailySeries, u: f64) -> usize {
    series.observed_values().filter(|&v| v > u).count()
}

/// Observed season-years: non-missing season days over the mean season length.
pub fn observed_period(series: &DailySeries, season: Season) -> Result<f64, PreprocessError> {
    let days = series
        .records()
        .iter()
        .filter(|r| r.value.is_some() && Season::of_date(r.date).0 == season)
        .count();
    if days == 0 {
        return Err(PreprocessError::NoObservedDays);
    }
    Ok(days as f64 / season.length_days())
}

/// Full preprocessing chain for one site: season extraction, missing filter,
/// percentile threshold, declustering and observed period.
pub fn seasonal_exceedances(
    series: &DailySeries,
    season: Season,
    years: YearRange,
    percentile: f64,
    missing_cutoff: f64,
) -> Result<SeasonalExceedances, PreprocessError> {
    let seasonal = extract_season(series, season, years);
    let expected = season.days_in(years);
    let n_obs_days = seasonal.observed_count();
    let fraction = missing_fraction_from_counts(expected.saturating_sub(n_obs_days), expected);
    if !passes_missing_filter(fraction, missing_cutoff) {
        return Err(PreprocessError::TooManyMissing { fraction, cutoff: missing_cutoff });
    }
    let threshold = percentile_threshold(&seasonal, percentile)?;
    let peaks = decluster_runs(&seasonal, threshold);
    let t_years = observed_period(&seasonal, season)?;
    Ok(SeasonalExceedances {
        site_id: series.site_id.clone(),
        season,
        threshold,
        peaks,
        t_years,
        n_obs_days,
        missing_fraction: fraction,
    })
}
