//! GEV family functions in the point-process parameterization.
//!
//! All levels are in tenths of a millimeter. The shape parameter switches to
//! the Gumbel-limit forms whenever `|xi| < XI_EPS`.

use thiserror::Error;

/// Below this `|xi|` every formula uses its Gumbel-limit form. The general
/// forms go through `ln_1p`/`exp_m1` and stay accurate well below 1e-7, so the
/// switch only has to keep `1/xi` finite.
pub const XI_EPS: f64 = 1e-12;

/// Quadratic forms more negative than this are treated as an invalid covariance.
const QUAD_FORM_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvdError {
    #[error("invalid GEV parameters (mu={mu}, psi={psi}, xi={xi})")]
    InvalidParams { mu: f64, psi: f64, xi: f64 },
    #[error("non-finite level {0}")]
    Domain(f64),
    #[error("return period must be at least 2 years, got {0}")]
    ReturnPeriod(f64),
    #[error("peak {peak} does not exceed threshold {threshold}")]
    PeakBelowThreshold { peak: f64, threshold: f64 },
    #[error("observation period must be positive, got {0}")]
    Period(f64),
    #[error("covariance quadratic form is negative ({0})")]
    InvalidCovariance(f64),
}

/// Location, scale and shape of a GEV distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GevParams {
    pub mu: f64,
    pub psi: f64,
    pub xi: f64,
}

impl GevParams {
    pub fn new(mu: f64, psi: f64, xi: f64) -> Result<Self, EvdError> {
        let p = GevParams { mu, psi, xi };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), EvdError> {
        if self.mu.is_finite() && self.psi.is_finite() && self.xi.is_finite() && self.psi > 0.0 {
            Ok(())
        } else {
            Err(EvdError::InvalidParams { mu: self.mu, psi: self.psi, xi: self.xi })
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.mu, self.psi, self.xi]
    }

    fn is_gumbel(&self) -> bool {
        self.xi.abs() < XI_EPS
    }

    /// `ln(1 + xi (y - mu) / psi)`, or `None` outside the support.
    fn log_support(&self, y: f64) -> Option<f64> {
        let w = self.xi * (y - self.mu) / self.psi;
        if 1.0 + w > 0.0 {
            Some(w.ln_1p())
        } else {
            None
        }
    }

    /// Expected number of exceedances of `y` per year, `(1 + xi (y - mu)/psi)_+^(-1/xi)`.
    pub fn exceedance_rate(&self, y: f64) -> f64 {
        if self.is_gumbel() {
            return (-(y - self.mu) / self.psi).exp();
        }
        match self.log_support(y) {
            Some(l) => (-l / self.xi).exp(),
            None if self.xi > 0.0 => f64::INFINITY,
            None => 0.0,
        }
    }
}

/// An n-year return value with its delta-method standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReturnLevel {
    pub value: f64,
    pub se: f64,
    pub n: f64,
}

/// Symmetric covariance of `(mu, psi, xi)` estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovMatrix3(pub [[f64; 3]; 3]);

impl CovMatrix3 {
    pub fn zeros() -> Self {
        CovMatrix3([[0.0; 3]; 3])
    }

    pub fn diag(d: [f64; 3]) -> Self {
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            m[i][i] = d[i];
        }
        CovMatrix3(m)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[i][j]
    }

    /// Standard errors, i.e. square roots of the diagonal.
    pub fn std_errors(&self) -> [f64; 3] {
        [self.0[0][0].sqrt(), self.0[1][1].sqrt(), self.0[2][2].sqrt()]
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..3).all(|i| {
            (0..3).all(|j| {
                let (a, b) = (self.0[i][j], self.0[j][i]);
                (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
            })
        })
    }
}

/// GEV distribution function `Pr{Y <= y}`.
pub fn gev_cdf(p: &GevParams, y: f64) -> Result<f64, EvdError> {
    p.validate()?;
    if !y.is_finite() {
        return Err(EvdError::Domain(y));
    }
    if p.is_gumbel() {
        return Ok((-(-(y - p.mu) / p.psi).exp()).exp());
    }
    Ok(match p.log_support(y) {
        Some(l) => (-(-l / p.xi).exp()).exp(),
        // below the lower endpoint when xi > 0, above the upper endpoint when xi < 0
        None if p.xi > 0.0 => 0.0,
        None => 1.0,
    })
}

/// `(n^xi - 1) / xi`, evaluated without cancellation for small `xi`.
fn growth_factor(xi: f64, log_n: f64) -> f64 {
    if xi.abs() < XI_EPS {
        log_n
    } else {
        (xi * log_n).exp_m1() / xi
    }
}

fn check_period(n: f64) -> Result<(), EvdError> {
    if n.is_finite() && n >= 2.0 {
        Ok(())
    } else {
        Err(EvdError::ReturnPeriod(n))
    }
}

/// Level `y_n` solving `(1 + xi (y_n - mu)/psi)^(-1/xi) = 1/n`.
pub fn return_level(p: &GevParams, n: f64) -> Result<f64, EvdError> {
    p.validate()?;
    check_period(n)?;
    Ok(p.mu + p.psi * growth_factor(p.xi, n.ln()))
}

/// Partial derivatives of [`return_level`] with respect to `(mu, psi, xi)`.
pub fn return_level_gradient(p: &GevParams, n: f64) -> Result<[f64; 3], EvdError> {
    p.validate()?;
    check_period(n)?;
    let l = n.ln();
    let d_psi = growth_factor(p.xi, l);
    let x = p.xi * l;
    let d_xi = if p.xi.abs() < XI_EPS {
        p.psi * l * l / 2.0
    } else if x.abs() < 0.1 {
        // psi (x e^x - e^x + 1) / xi^2 = psi l^2 sum_{k>=2} (k-1) x^(k-2) / k!
        let mut sum = 0.0;
        let mut pow = 1.0;
        let mut fact = 2.0;
        for k in 2..20u32 {
            sum += f64::from(k - 1) * pow / fact;
            pow *= x;
            fact *= f64::from(k + 1);
        }
        p.psi * l * l * sum
    } else {
        let nx = x.exp();
        p.psi * (x * nx - nx + 1.0) / (p.xi * p.xi)
    };
    Ok([1.0, d_psi, d_xi])
}

/// Point-process intensity `(1/psi)(1 + xi (y - mu)/psi)_+^(-1/xi - 1)` at level `y`.
pub fn pp_intensity(p: &GevParams, y: f64) -> f64 {
    if p.is_gumbel() {
        return (-(y - p.mu) / p.psi).exp() / p.psi;
    }
    match p.log_support(y) {
        Some(l) => ((-1.0 / p.xi - 1.0) * l).exp() / p.psi,
        None => 0.0,
    }
}

/// Point-process negative log-likelihood for `peaks` over threshold `u`
/// observed during `t_years`. Returns `+inf` when a support constraint fails.
pub fn pp_neg_log_likelihood(
    p: &GevParams,
    peaks: &[f64],
    u: f64,
    t_years: f64,
) -> Result<f64, EvdError> {
    p.validate()?;
    if !(t_years > 0.0 && t_years.is_finite()) {
        return Err(EvdError::Period(t_years));
    }
    if let Some(&peak) = peaks.iter().find(|&&y| !(y > u)) {
        return Err(EvdError::PeakBelowThreshold { peak, threshold: u });
    }
    Ok(nll_unchecked(p, peaks, u, t_years))
}

/// Same as [`pp_neg_log_likelihood`] without argument validation; used in the
/// optimizer's inner loop.
pub(crate) fn nll_unchecked(p: &GevParams, peaks: &[f64], u: f64, t_years: f64) -> f64 {
    if !(p.psi > 0.0) || !p.psi.is_finite() {
        return f64::INFINITY;
    }
    let n = peaks.len() as f64;
    if p.is_gumbel() {
        let sum: f64 = peaks.iter().map(|y| (y - p.mu) / p.psi).sum();
        return n * p.psi.ln() + sum + t_years * (-(u - p.mu) / p.psi).exp();
    }
    let Some(lu) = p.log_support(u) else {
        return f64::INFINITY;
    };
    let mut sum = 0.0;
    for &y in peaks {
        match p.log_support(y) {
            Some(l) => sum += l,
            None => return f64::INFINITY,
        }
    }
    n * p.psi.ln() + (1.0 / p.xi + 1.0) * sum + t_years * (-lu / p.xi).exp()
}

/// Delta-method standard error `sqrt(grad' cov grad)`.
pub fn delta_method_se(grad: &[f64; 3], cov: &CovMatrix3) -> Result<f64, EvdError> {
    let mut q = 0.0;
    let mut scale = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let term = grad[i] * cov.0[i][j] * grad[j];
            q += term;
            scale += term.abs();
        }
    }
    if !q.is_finite() {
        return Err(EvdError::InvalidCovariance(q));
    }
    if q < 0.0 {
        if q < -QUAD_FORM_TOL * scale.max(1.0) {
            return Err(EvdError::InvalidCovariance(q));
        }
        return Ok(0.0);
    }
    Ok(q.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn gp(mu: f64, psi: f64, xi: f64) -> GevParams {
        GevParams::new(mu, psi, xi).unwrap()
    }

    #[test]
    fn cdf_examples() {
        assert_relative_eq!(gev_cdf(&gp(0.0, 1.0, 0.0), 0.0).unwrap(), (-1.0f64).exp(), epsilon = 1e-12);
        assert_relative_eq!(gev_cdf(&gp(0.0, 1.0, 0.5), 2.0).unwrap(), (-0.25f64).exp(), epsilon = 1e-12);
        assert_eq!(gev_cdf(&gp(0.0, 1.0, -1.0), 2.0).unwrap(), 1.0);
        // below the lower endpoint mu - psi/xi = -2
        assert_eq!(gev_cdf(&gp(0.0, 1.0, 0.5), -3.0).unwrap(), 0.0);
    }

    #[test]
    fn cdf_rejects_bad_input() {
        assert!(matches!(gev_cdf(&gp(0.0, 1.0, 0.1), f64::NAN), Err(EvdError::Domain(_))));
        assert!(GevParams::new(0.0, 0.0, 0.1).is_err());
        assert!(GevParams::new(0.0, 1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn return_level_examples() {
        assert_relative_eq!(return_level(&gp(0.0, 1.0, 0.0), 100.0).unwrap(), 100f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(return_level(&gp(0.0, 1.0, 1.0), 100.0).unwrap(), 99.0, epsilon = 1e-10);
        assert!(return_level(&gp(0.0, 1.0, 1.0), 1.5).is_err());
    }

    #[test]
    fn return_level_matches_bisection_oracle() {
        let p = gp(500.0, 200.0, 0.1);
        let target = (-0.01f64).exp();
        let (mut lo, mut hi) = (0.0, 10_000.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if gev_cdf(&p, mid).unwrap() < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let y = return_level(&p, 100.0).unwrap();
        assert_relative_eq!(y, 0.5 * (lo + hi), epsilon = 1e-6);
        assert!((y - 1669.79).abs() < 0.01);
    }

    #[test]
    fn gradient_examples() {
        let g = return_level_gradient(&gp(0.0, 1.0, 0.0), 100.0).unwrap();
        let l = 100f64.ln();
        assert_eq!(g[0], 1.0);
        assert_relative_eq!(g[1], l, epsilon = 1e-12);
        assert_relative_eq!(g[2], l * l / 2.0, epsilon = 1e-12);
        assert!((g[2] - 10.6038).abs() < 1e-4);

        let g = return_level_gradient(&gp(0.0, 1.0, 1.0), 100.0).unwrap();
        assert_relative_eq!(g[1], 99.0, epsilon = 1e-10);
        assert_relative_eq!(g[2], 100.0 * l - 99.0, epsilon = 1e-9);
    }

    #[test]
    fn gradient_series_branch_matches_closed_form() {
        // x = xi ln n just below and above the series cutoff
        let l = 100f64.ln();
        for &x in &[0.0999, 0.1001, -0.0999, -0.1001] {
            let p = gp(10.0, 3.0, x / l);
            let d = return_level_gradient(&p, 100.0).unwrap()[2];
            let nx: f64 = f64::exp(x);
            let closed = p.psi * (x * nx - nx + 1.0) / (p.xi * p.xi);
            assert_relative_eq!(d, closed, max_relative = 1e-9);
        }
    }

    #[test]
    fn intensity_examples() {
        assert_relative_eq!(pp_intensity(&gp(0.0, 1.0, 0.0), 0.0), 1.0, epsilon = 1e-12);
        assert_relative_eq!(pp_intensity(&gp(0.0, 1.0, 1.0), 1.0), 0.25, epsilon = 1e-12);
        assert_eq!(pp_intensity(&gp(0.0, 1.0, -1.0), 2.0), 0.0);
    }

    #[test]
    fn nll_examples() {
        let v = pp_neg_log_likelihood(&gp(0.0, 1.0, 0.0), &[2.0], 1.0, 1.0).unwrap();
        assert_relative_eq!(v, 2.0 + (-1.0f64).exp(), epsilon = 1e-12);
        let v = pp_neg_log_likelihood(&gp(0.0, 1.0, 1.0), &[2.0], 1.0, 1.0).unwrap();
        assert_relative_eq!(v, 2.0 * 3f64.ln() + 0.5, epsilon = 1e-12);
        let v = pp_neg_log_likelihood(&gp(0.0, 1.0, -2.0), &[2.0], 1.0, 1.0).unwrap();
        assert_eq!(v, f64::INFINITY);
    }

    #[test]
    fn nll_preconditions() {
        let p = gp(0.0, 1.0, 0.1);
        assert!(matches!(
            pp_neg_log_likelihood(&p, &[1.0], 1.0, 1.0),
            Err(EvdError::PeakBelowThreshold { .. })
        ));
        assert!(matches!(pp_neg_log_likelihood(&p, &[2.0], 1.0, 0.0), Err(EvdError::Period(_))));
    }

    #[test]
    fn delta_method_examples() {
        let cov = CovMatrix3::diag([4.0, 9.0, 16.0]);
        assert_relative_eq!(delta_method_se(&[1.0, 0.0, 0.0], &cov).unwrap(), 2.0);
        let cov = CovMatrix3::diag([1.0, 1.0, 1.0]);
        assert_relative_eq!(delta_method_se(&[1.0, 1.0, 0.0], &cov).unwrap(), 2f64.sqrt());
        let bad = CovMatrix3::diag([-1.0, 0.0, 0.0]);
        assert!(delta_method_se(&[1.0, 0.0, 0.0], &bad).is_err());
        let tiny = CovMatrix3::diag([-1e-14, 0.0, 0.0]);
        assert_eq!(delta_method_se(&[1.0, 0.0, 0.0], &tiny).unwrap(), 0.0);
    }
}
