//! Log-scale regression of point return levels on gridded return levels,
//! elevation and a polynomial surface in latitude and longitude.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegressionError {
    #[error("station at ({lat}, {lon}) is outside every grid cell")]
    NoCell { lat: f64, lon: f64 },
    #[error("design matrix is rank deficient")]
    Singular,
    #[error("need more observations ({n}) than columns ({k})")]
    TooFewObservations { n: usize, k: usize },
    #[error("residual sum of squares is zero; AIC undefined")]
    PerfectFit,
    #[error("point return level must be positive, got {0}")]
    NonPositiveResponse(f64),
    #[error("no records")]
    Empty,
    #[error("latitude/longitude degree {0} exceeds 4")]
    Degree(u8),
    #[error("every candidate model failed")]
    AllCandidatesFailed,
}

/// A grid box with its center coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub cell_id: String,
    pub lat: f64,
    pub lon: f64,
}

/// Regular grid: each cell spans its center plus or minus half the spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub spacing: f64,
    pub cells: Vec<GridCell>,
}

impl Grid {
    /// Index of the first cell (in list order) containing the point; a point on
    /// a shared edge therefore goes to the lower-index cell.
    pub fn locate(&self, lat: f64, lon: f64) -> Result<usize, RegressionError> {
        let half = 0.5 * self.spacing + 1e-9;
        self.cells
            .iter()
            .position(|c| (lat - c.lat).abs() <= half && (lon - c.lon).abs() <= half)
            .ok_or(RegressionError::NoCell { lat, lon })
    }
}

pub fn assign_station_to_cell(lat: f64, lon: f64, grid: &Grid) -> Result<String, RegressionError> {
    grid.locate(lat, lon).map(|i| grid.cells[i].cell_id.clone())
}

/// One station paired with its grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedRecord {
    pub station_id: String,
    pub cell_id: String,
    pub y_point: f64,
    pub x_grid: f64,
    pub elev: f64,
    pub lat: f64,
    pub lon: f64,
}

/// Which covariates enter the design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DesignSpec {
    pub include_grid: bool,
    pub include_elev: bool,
    pub latlon_degree: u8,
}

impl DesignSpec {
    pub fn new(include_grid: bool, include_elev: bool, latlon_degree: u8) -> Result<Self, RegressionError> {
        if latlon_degree > 4 {
            return Err(RegressionError::Degree(latlon_degree));
        }
        Ok(DesignSpec { include_grid, include_elev, latlon_degree })
    }

    /// Grid and elevation terms with the given surface degree.
    pub fn full(latlon_degree: u8) -> Self {
        DesignSpec { include_grid: true, include_elev: true, latlon_degree: latlon_degree.min(4) }
    }

    /// Exponents `(a, b)` of the `lat^a lon^b` terms, ordered by total degree.
    pub fn monomials(&self) -> Vec<(u8, u8)> {
        let mut out = Vec::new();
        for d in 1..=self.latlon_degree {
            for a in (0..=d).rev() {
                out.push((a, d - a));
            }
        }
        out
    }

    pub fn n_columns(&self) -> usize {
        1 + usize::from(self.include_grid) + usize::from(self.include_elev) + self.monomials().len()
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names = vec!["intercept".to_string()];
        if self.include_grid {
            names.push("grid".into());
        }
        if self.include_elev {
            names.push("elev".into());
        }
        for (a, b) in self.monomials() {
            let term = |v: &str, p: u8| match p {
                0 => None,
                1 => Some(v.to_string()),
                _ => Some(format!("{v}^{p}")),
            };
            let parts: Vec<String> = [term("lat", a), term("lon", b)].into_iter().flatten().collect();
            names.push(parts.join("*"));
        }
        names
    }
}

impl fmt::Display for DesignSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "grid={} elev={} degree={}", self.include_grid, self.include_elev, self.latlon_degree)
    }
}

/// Covariates of a single prediction point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Covariates {
    pub x_grid: f64,
    pub elev: f64,
    pub lat: f64,
    pub lon: f64,
}

impl From<&PairedRecord> for Covariates {
    fn from(r: &PairedRecord) -> Self {
        Covariates { x_grid: r.x_grid, elev: r.elev, lat: r.lat, lon: r.lon }
    }
}

/// Design matrix with the centering used for the lat/lon terms.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub spec: DesignSpec,
    pub center: (f64, f64),
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

fn design_row(spec: &DesignSpec, center: (f64, f64), c: &Covariates) -> Vec<f64> {
    let mut row = Vec::with_capacity(spec.n_columns());
    row.push(1.0);
    if spec.include_grid {
        row.push(c.x_grid);
    }
    if spec.include_elev {
        row.push(c.elev);
    }
    let (dlat, dlon) = (c.lat - center.0, c.lon - center.1);
    for (a, b) in spec.monomials() {
        row.push(dlat.powi(i32::from(a)) * dlon.powi(i32::from(b)));
    }
    row
}

/// Builds `(X, ln y)` with lat/lon centered at their sample means.
pub fn build_design(records: &[PairedRecord], spec: &DesignSpec) -> Result<Design, RegressionError> {
    if records.is_empty() {
        return Err(RegressionError::Empty);
    }
    let n = records.len() as f64;
    let center = (
        records.iter().map(|r| r.lat).sum::<f64>() / n,
        records.iter().map(|r| r.lon).sum::<f64>() / n,
    );
    build_design_centered(records, spec, center)
}

pub fn build_design_centered(
    records: &[PairedRecord],
    spec: &DesignSpec,
    center: (f64, f64),
) -> Result<Design, RegressionError> {
    if records.is_empty() {
        return Err(RegressionError::Empty);
    }
    if spec.latlon_degree > 4 {
        return Err(RegressionError::Degree(spec.latlon_degree));
    }
    if let Some(r) = records.iter().find(|r| !(r.y_point > 0.0)) {
        return Err(RegressionError::NonPositiveResponse(r.y_point));
    }
    let k = spec.n_columns();
    let rows: Vec<Vec<f64>> = records.iter().map(|r| design_row(spec, center, &r.into())).collect();
    let x = DMatrix::from_fn(records.len(), k, |i, j| rows[i][j]);
    let y = DVector::from_iterator(records.len(), records.iter().map(|r| r.y_point.ln()));
    Ok(Design { spec: *spec, center, x, y })
}

/// Ordinary least squares fit on the log scale.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    pub spec: DesignSpec,
    pub center: (f64, f64),
    pub coeffs: Vec<f64>,
    pub coeff_ses: Vec<f64>,
    pub residuals: Vec<f64>,
    pub rss: f64,
    pub n: usize,
    pub k: usize,
    /// `None` when the residual sum of squares is zero.
    pub aic: Option<f64>,
    pub sigma2: f64,
    /// `(X'X)^-1`.
    pub xtx_inv: DMatrix<f64>,
}

impl RegressionFit {
    /// Model with given coefficients and no uncertainty information, e.g. for
    /// evaluating published coefficient tables.
    pub fn from_coefficients(spec: DesignSpec, center: (f64, f64), coeffs: Vec<f64>) -> Self {
        let k = coeffs.len();
        RegressionFit {
            spec,
            center,
            coeff_ses: vec![0.0; k],
            coeffs,
            residuals: Vec::new(),
            rss: 0.0,
            n: 0,
            k,
            aic: None,
            sigma2: 0.0,
            xtx_inv: DMatrix::zeros(k, k),
        }
    }

    pub fn term_names(&self) -> Vec<String> {
        self.spec.column_names()
    }
}

/// Least squares through a Householder QR of the design.
pub fn fit_ols(design: &Design) -> Result<RegressionFit, RegressionError> {
    let (n, k) = design.x.shape();
    if n <= k {
        return Err(RegressionError::TooFewObservations { n, k });
    }
    let qr = design.x.clone().qr();
    let r = qr.r();
    let scale = (0..k).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..k).any(|i| r[(i, i)].abs() <= 1e-10 * scale) || scale == 0.0 {
        return Err(RegressionError::Singular);
    }
    let qty = qr.q().transpose() * &design.y;
    let beta = r.solve_upper_triangular(&qty).ok_or(RegressionError::Singular)?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or(RegressionError::Singular)?;
    let xtx_inv = &r_inv * r_inv.transpose();
    let resid = &design.y - &design.x * &beta;
    let rss = resid.norm_squared();
    let sigma2 = rss / (n - k) as f64;
    let coeff_ses = (0..k).map(|i| (sigma2 * xtx_inv[(i, i)]).sqrt()).collect();
    Ok(RegressionFit {
        spec: design.spec,
        center: design.center,
        coeffs: beta.iter().copied().collect(),
        coeff_ses,
        residuals: resid.iter().copied().collect(),
        rss,
        n,
        k,
        aic: aic_from(n, rss, k).ok(),
        sigma2,
        xtx_inv,
    })
}

/// `n ln(RSS/n) + 2(k + 1)`, the noise variance counted as a parameter.
pub fn aic_from(n: usize, rss: f64, k: usize) -> Result<f64, RegressionError> {
    if !(rss > 0.0) {
        return Err(RegressionError::PerfectFit);
    }
    let n = n as f64;
    Ok(n * (rss / n).ln() + 2.0 * (k as f64 + 1.0))
}

pub fn aic(fit: &RegressionFit) -> Result<f64, RegressionError> {
    aic_from(fit.n, fit.rss, fit.k)
}

/// Winning fit plus the AIC of every candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub best: RegressionFit,
    pub table: Vec<(DesignSpec, Result<f64, RegressionError>)>,
}

/// The default candidate set: grid and elevation with surface degrees 0 to 4.
pub fn default_candidates() -> Vec<DesignSpec> {
    (0..=4).map(DesignSpec::full).collect()
}

/// Fits every candidate and keeps the minimum-AIC model. With one candidate
/// that fit is returned even when its AIC is undefined.
pub fn select_model(records: &[PairedRecord], candidates: &[DesignSpec]) -> Result<Selection, RegressionError> {
    let fits: Vec<Result<RegressionFit, RegressionError>> =
        candidates.iter().map(|s| build_design(records, s).and_then(|d| fit_ols(&d))).collect();
    if candidates.len() == 1 {
        let fit = fits.into_iter().next().expect("one candidate")?;
        let table = vec![(fit.spec, aic(&fit))];
        return Ok(Selection { best: fit, table });
    }
    let table: Vec<_> = candidates
        .iter()
        .zip(&fits)
        .map(|(s, f)| (*s, f.clone().and_then(|f| aic(&f))))
        .collect();
    let best_idx = table
        .iter()
        .enumerate()
        .filter_map(|(i, (_, a))| a.as_ref().ok().map(|&a| (i, a)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
        .ok_or(RegressionError::AllCandidatesFailed)?;
    let best = fits.into_iter().nth(best_idx).expect("index in range")?;
    Ok(Selection { best, table })
}

/// Point prediction on the original scale with a delta-method SE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointPrediction {
    pub log_mean: f64,
    pub log_var: f64,
    pub level: f64,
    pub se_level: f64,
}

/// Back-transformed prediction `exp(x'b)`; the log-scale variance is the
/// prediction variance `sigma2 (1 + x'(X'X)^-1 x)`.
pub fn predict_point_return(fit: &RegressionFit, c: &Covariates) -> PointPrediction {
    let row = design_row(&fit.spec, fit.center, c);
    let x = DVector::from_vec(row);
    let eta: f64 = x.iter().zip(&fit.coeffs).map(|(a, b)| a * b).sum();
    let lev = x.dot(&(&fit.xtx_inv * &x));
    let v = fit.sigma2 * (1.0 + lev);
    let level = eta.exp();
    PointPrediction { log_mean: eta, log_var: v, level, se_level: level * v.max(0.0).sqrt() }
}
