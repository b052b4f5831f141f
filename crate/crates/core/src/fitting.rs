//! Maximum-likelihood fitting of the point-process model.
//!
//! The likelihood is minimized over `(mu, ln psi, xi)` with a Nelder-Mead
//! simplex, restarted once from the incumbent. The covariance is the inverse
//! of the central-difference Hessian of the negative log-likelihood in the
//! original `(mu, psi, xi)` coordinates.

use std::fmt;

use nalgebra::Matrix3;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::evd::{
    self, delta_method_se, return_level, return_level_gradient, CovMatrix3, EvdError, GevParams,
    ReturnLevel,
};
use crate::optim::{nelder_mead, numerical_hessian, SimplexOptions};
use crate::preprocess::{self, PreprocessError, SeasonalExceedances};
use crate::series::{DailySeries, Season, YearRange};

/// Minimum number of peaks for a fit.
pub const MIN_PEAKS: usize = 10;
/// Shape parameter search interval; an optimum on its edge is a failed fit.
pub const XI_BOUNDS: (f64, f64) = (-0.95, 2.0);
/// Initial shape parameter of the seed.
pub const XI_SEED: f64 = 0.05;
/// Relative finite-difference step for the Hessian.
pub const HESSIAN_REL_STEP: f64 = 1e-4;

const BOUND_MARGIN: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least {needed} peaks, found {found}")]
    InsufficientPeaks { needed: usize, found: usize },
    #[error(transparent)]
    Evd(#[from] EvdError),
    #[error("fit did not converge ({0})")]
    NotConverged(FitFailure),
    #[error("standard error of xi is zero")]
    DegenerateSe,
}

/// Why a fit was marked as failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitFailure {
    /// All peaks equal; the likelihood has no interior optimum.
    Degenerate,
    /// Simplex spread did not reach tolerance within the evaluation budget.
    NoConvergence,
    /// Estimated shape on the edge of [`XI_BOUNDS`].
    ShapeAtBound,
    /// Observed information not positive definite.
    SingularHessian,
}

impl fmt::Display for FitFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitFailure::Degenerate => "degenerate",
            FitFailure::NoConvergence => "no_convergence",
            FitFailure::ShapeAtBound => "shape_at_bound",
            FitFailure::SingularHessian => "singular_hessian",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: GevParams,
    pub cov: CovMatrix3,
    pub converged: bool,
    pub failure: Option<FitFailure>,
    pub n_peaks: usize,
    pub threshold: f64,
    pub t_years: f64,
    pub neg_loglik: f64,
}

impl FitResult {
    pub fn std_errors(&self) -> [f64; 3] {
        self.cov.std_errors()
    }
}

/// Gumbel-moment seed: `psi0` is the mean excess and `mu0` matches the
/// expected exceedance count `T exp(-(u - mu)/psi)` to the observed `N`.
pub fn initial_params(peaks: &[f64], u: f64, t_years: f64) -> Result<GevParams, FitError> {
    if peaks.len() < MIN_PEAKS {
        return Err(FitError::InsufficientPeaks { needed: MIN_PEAKS, found: peaks.len() });
    }
    if !(t_years > 0.0) {
        return Err(EvdError::Period(t_years).into());
    }
    let n = peaks.len() as f64;
    let psi = peaks.iter().map(|y| y - u).sum::<f64>() / n;
    let mu = u + psi * (n / t_years).ln();
    Ok(GevParams::new(mu, psi, XI_SEED)?)
}

fn theta_to_params(theta: &[f64; 3]) -> GevParams {
    GevParams { mu: theta[0], psi: theta[1].exp(), xi: theta[2] }
}

/// Fits the point-process model to `peaks` over `u` observed for `t_years`.
///
/// Precondition violations are errors; numerical failures are reported in the
/// returned [`FitResult`] with `converged == false`.
pub fn fit_point_process(peaks: &[f64], u: f64, t_years: f64) -> Result<FitResult, FitError> {
    let mut seed = initial_params(peaks, u, t_years)?;
    if let Some(&peak) = peaks.iter().find(|&&y| !(y > u)) {
        return Err(EvdError::PeakBelowThreshold { peak, threshold: u }.into());
    }
    let failed = |params: GevParams, nll: f64, why: FitFailure| FitResult {
        params,
        cov: CovMatrix3([[f64::NAN; 3]; 3]),
        converged: false,
        failure: Some(why),
        n_peaks: peaks.len(),
        threshold: u,
        t_years,
        neg_loglik: nll,
    };

    let (lo, hi) = peaks.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &y| (a.min(y), b.max(y)));
    if hi - lo <= 0.0 {
        return Ok(failed(seed, f64::NAN, FitFailure::Degenerate));
    }

    if !evd::nll_unchecked(&seed, peaks, u, t_years).is_finite() {
        seed.xi = 0.0;
    }
    let objective = |theta: &[f64; 3]| {
        if !(XI_BOUNDS.0..=XI_BOUNDS.1).contains(&theta[2]) {
            return f64::INFINITY;
        }
        evd::nll_unchecked(&theta_to_params(theta), peaks, u, t_years)
    };
    let steps = [0.1 * seed.psi, 0.1, 0.05];
    let opts = SimplexOptions::default();
    let first = nelder_mead(objective, [seed.mu, seed.psi.ln(), seed.xi], steps, opts);
    let second = nelder_mead(objective, first.x, steps, opts);
    let best = if second.f <= first.f { second.x } else { first.x };
    let params = theta_to_params(&best);
    let nll = first.f.min(second.f);

    if !second.converged || !nll.is_finite() {
        return Ok(failed(params, nll, FitFailure::NoConvergence));
    }
    if params.xi - XI_BOUNDS.0 < BOUND_MARGIN || XI_BOUNDS.1 - params.xi < BOUND_MARGIN {
        return Ok(failed(params, nll, FitFailure::ShapeAtBound));
    }

    let raw = |x: &[f64; 3]| evd::nll_unchecked(&GevParams { mu: x[0], psi: x[1], xi: x[2] }, peaks, u, t_years);
    let h = numerical_hessian(raw, &params.as_array(), HESSIAN_REL_STEP);
    let Some(cov) = invert_information(&h) else {
        return Ok(failed(params, nll, FitFailure::SingularHessian));
    };
    Ok(FitResult {
        params,
        cov,
        converged: true,
        failure: None,
        n_peaks: peaks.len(),
        threshold: u,
        t_years,
        neg_loglik: nll,
    })
}

/// Inverse of a positive definite observed information matrix.
fn invert_information(h: &[[f64; 3]; 3]) -> Option<CovMatrix3> {
    let m = Matrix3::from_fn(|i, j| h[i][j]);
    if m.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let inv = m.cholesky()?.inverse();
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = 0.5 * (inv[(i, j)] + inv[(j, i)]);
        }
    }
    if (0..3).any(|i| !(out[i][i] > 0.0 && out[i][i].is_finite())) {
        return None;
    }
    Some(CovMatrix3(out))
}

/// n-year return level of a converged fit with its delta-method SE.
pub fn return_level_with_se(fit: &FitResult, n: f64) -> Result<ReturnLevel, FitError> {
    if !fit.converged {
        return Err(FitError::NotConverged(fit.failure.unwrap_or(FitFailure::NoConvergence)));
    }
    let value = return_level(&fit.params, n)?;
    let grad = return_level_gradient(&fit.params, n)?;
    let se = delta_method_se(&grad, &fit.cov)?;
    Ok(ReturnLevel { value, se, n })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Right,
    Left,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XiTest {
    pub z: f64,
    pub reject: bool,
}

/// Upper `1 - alpha` quantile of the standard normal.
pub fn normal_quantile(prob: f64) -> f64 {
    Normal::standard().inverse_cdf(prob)
}

/// One-sided Wald test of `xi = 0`.
pub fn xi_test(fit: &FitResult, side: Side, alpha: f64) -> Result<XiTest, FitError> {
    if !fit.converged {
        return Err(FitError::NotConverged(fit.failure.unwrap_or(FitFailure::NoConvergence)));
    }
    xi_test_from(fit.params.xi, fit.cov.get(2, 2).sqrt(), side, alpha)
}

pub fn xi_test_from(xi: f64, se: f64, side: Side, alpha: f64) -> Result<XiTest, FitError> {
    if !(se > 0.0) {
        return Err(FitError::DegenerateSe);
    }
    let z = xi / se;
    let crit = normal_quantile(1.0 - alpha);
    let reject = match side {
        Side::Right => z > crit,
        Side::Left => z < -crit,
    };
    Ok(XiTest { z, reject })
}

/// Fit summary for one threshold choice.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityRow {
    pub percentile: f64,
    pub threshold: f64,
    pub n_peaks: usize,
    pub outcome: Result<(FitResult, ReturnLevel), String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdComparison {
    pub rows: Vec<StabilityRow>,
}

/// Differences between the first two successful rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityDelta {
    pub params: [f64; 3],
    pub level: f64,
    pub combined_se: f64,
}

impl ThresholdComparison {
    pub fn delta(&self) -> Option<StabilityDelta> {
        let ok: Vec<_> = self.rows.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
        let [(fa, la), (fb, lb), ..] = ok.as_slice() else {
            return None;
        };
        let (pa, pb) = (fa.params.as_array(), fb.params.as_array());
        Some(StabilityDelta {
            params: [pb[0] - pa[0], pb[1] - pa[1], pb[2] - pa[2]],
            level: lb.value - la.value,
            combined_se: la.se.hypot(lb.se),
        })
    }
}

/// Refits a seasonal series at several percentile thresholds.
pub fn threshold_stability(
    seasonal: &DailySeries,
    season: Season,
    percentiles: &[f64],
    return_period: f64,
) -> ThresholdComparison {
    let rows = percentiles
        .iter()
        .map(|&p| {
            let threshold = preprocess::percentile_threshold(seasonal, p);
            let (threshold, outcome, n_peaks) = match threshold {
                Err(e) => (f64::NAN, Err(e.to_string()), 0),
                Ok(u) => {
                    let peaks = preprocess::decluster_runs(seasonal, u);
                    let n = peaks.len();
                    let outcome = preprocess::observed_period(seasonal, season)
                        .map_err(|e| e.to_string())
                        .and_then(|t| fit_point_process(&peaks, u, t).map_err(|e| e.to_string()))
                        .and_then(|fit| match return_level_with_se(&fit, return_period) {
                            Ok(level) => Ok((fit, level)),
                            Err(e) => Err(e.to_string()),
                        });
                    (u, outcome, n)
                }
            };
            StabilityRow { percentile: p, threshold, n_peaks, outcome }
        })
        .collect();
    ThresholdComparison { rows }
}

/// Settings for the per-site preprocess + fit chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisConfig {
    pub season: Season,
    pub years: YearRange,
    pub percentile: f64,
    pub missing_cutoff: f64,
    pub return_period: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiteAnalysis {
    pub exceedances: SeasonalExceedances,
    pub fit: FitResult,
    pub level: ReturnLevel,
}

/// Why a site dropped out of the chain.
#[derive(Debug, Clone, PartialEq)]
pub enum SiteFailure {
    TooManyMissing(f64),
    InsufficientData(String),
    FitFailed(FitFailure),
}

impl fmt::Display for SiteFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SiteFailure::TooManyMissing(fr) => write!(f, "too_many_missing ({fr:.4})"),
            SiteFailure::InsufficientData(msg) => write!(f, "insufficient_data ({msg})"),
            SiteFailure::FitFailed(why) => write!(f, "fit_failed ({why})"),
        }
    }
}

/// Preprocess, fit and compute the return level for one series.
pub fn analyze_series(series: &DailySeries, cfg: &AnalysisConfig) -> Result<SiteAnalysis, SiteFailure> {
    let ex = preprocess::seasonal_exceedances(series, cfg.season, cfg.years, cfg.percentile, cfg.missing_cutoff)
        .map_err(|e| match e {
            PreprocessError::TooManyMissing { fraction, .. } => SiteFailure::TooManyMissing(fraction),
            other => SiteFailure::InsufficientData(other.to_string()),
        })?;
    let fit = fit_point_process(&ex.peaks, ex.threshold, ex.t_years)
        .map_err(|e| SiteFailure::InsufficientData(e.to_string()))?;
    if let Some(why) = fit.failure {
        return Err(SiteFailure::FitFailed(why));
    }
    let level = return_level_with_se(&fit, cfg.return_period).map_err(|e| match e {
        FitError::NotConverged(why) => SiteFailure::FitFailed(why),
        // a negative delta-method variance means the covariance is unusable
        _ => SiteFailure::FitFailed(FitFailure::SingularHessian),
    })?;
    Ok(SiteAnalysis { exceedances: ex, fit, level })
}
