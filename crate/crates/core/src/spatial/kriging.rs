use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use super::{great_circle_miles, LatLon, DEFAULT_RANGE_MILES};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KrigingError {
    #[error("duplicate observation sites: {0:?}")]
    DuplicateSites(Vec<(String, String)>),
    #[error("kriging system is singular")]
    Singular,
    #[error("need more observations ({n}) than trend terms ({p})")]
    TooFewObservations { n: usize, p: usize },
    #[error("invalid kriging model: {0}")]
    Model(String),
    #[error("kriged and modeled predictions cover different sites")]
    TargetMismatch,
}

/// Trend surface of the universal kriging predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trend {
    Constant,
    /// Linear in latitude, longitude and elevation.
    LatLonElev,
}

impl Trend {
    fn n_terms(self) -> usize {
        match self {
            Trend::Constant => 1,
            Trend::LatLonElev => 4,
        }
    }

    fn raw_row(self, loc: LatLon, elev: f64) -> Vec<f64> {
        match self {
            Trend::Constant => vec![1.0],
            Trend::LatLonElev => vec![1.0, loc.lat, loc.lon, elev],
        }
    }
}

/// Exponential covariance `sigma2 exp(-h / range) + nugget 1{h = 0}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrigingModel {
    pub sigma2: f64,
    pub range_miles: f64,
    pub nugget: f64,
    pub trend: Trend,
}

impl KrigingModel {
    pub fn new(sigma2: f64, range_miles: f64, nugget: f64, trend: Trend) -> Result<Self, KrigingError> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(KrigingError::Model(format!("sill {sigma2} must be positive")));
        }
        if !(range_miles > 0.0 && range_miles.is_finite()) {
            return Err(KrigingError::Model(format!("range {range_miles} must be positive")));
        }
        if !(nugget >= 0.0) {
            return Err(KrigingError::Model(format!("nugget {nugget} must be non-negative")));
        }
        Ok(KrigingModel { sigma2, range_miles, nugget, trend })
    }

    /// Sill from the residual variance of the trend regression, default range, no nugget.
    pub fn from_observations(obs: &[KrigingObs], trend: Trend) -> Result<Self, KrigingError> {
        let sigma2 = estimate_sill(obs, trend)?;
        KrigingModel::new(sigma2, DEFAULT_RANGE_MILES, 0.0, trend)
    }

    pub fn covariance(&self, h: f64) -> f64 {
        let c = self.sigma2 * (-h / self.range_miles).exp();
        if h == 0.0 {
            c + self.nugget
        } else {
            c
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrigingObs {
    pub site_id: String,
    pub loc: LatLon,
    pub elev: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrigingTarget {
    pub site_id: String,
    pub loc: LatLon,
    pub elev: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrigingPrediction {
    pub site_id: String,
    pub prediction: f64,
    pub se: f64,
}

/// Affine normalization of trend columns; predictions do not depend on it.
struct TrendScaling {
    shift: Vec<f64>,
    scale: Vec<f64>,
}

impl TrendScaling {
    fn fit(rows: &[Vec<f64>]) -> Self {
        let p = rows[0].len();
        let n = rows.len() as f64;
        let mut shift = vec![0.0; p];
        let mut scale = vec![1.0; p];
        for j in 1..p {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let sd = (rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n).sqrt();
            shift[j] = mean;
            scale[j] = if sd > 0.0 { sd } else { 1.0 };
        }
        TrendScaling { shift, scale }
    }

    fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(self.shift.iter().zip(&self.scale)).map(|(v, (s, c))| (v - s) / c).collect()
    }
}

fn trend_matrix(obs: &[KrigingObs], trend: Trend) -> (DMatrix<f64>, TrendScaling) {
    let raw: Vec<Vec<f64>> = obs.iter().map(|o| trend.raw_row(o.loc, o.elev)).collect();
    let scaling = TrendScaling::fit(&raw);
    let p = trend.n_terms();
    let rows: Vec<Vec<f64>> = raw.iter().map(|r| scaling.apply(r)).collect();
    (DMatrix::from_fn(obs.len(), p, |i, j| rows[i][j]), scaling)
}

/// Residual variance `RSS / (n - p)` of the least-squares trend fit.
pub fn estimate_sill(obs: &[KrigingObs], trend: Trend) -> Result<f64, KrigingError> {
    let p = trend.n_terms();
    if obs.len() <= p {
        return Err(KrigingError::TooFewObservations { n: obs.len(), p });
    }
    let (f, _) = trend_matrix(obs, trend);
    let z = DVector::from_iterator(obs.len(), obs.iter().map(|o| o.value));
    let qr = f.clone().qr();
    let qtz = qr.q().transpose() * &z;
    let beta = qr.r().solve_upper_triangular(&qtz).ok_or(KrigingError::Singular)?;
    let rss = (&z - &f * beta).norm_squared();
    Ok(rss / (obs.len() - p) as f64)
}

/// Factorized universal kriging system for a fixed set of observations.
pub struct KrigingSystem<'a> {
    obs: &'a [KrigingObs],
    model: KrigingModel,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    f: DMatrix<f64>,
    scaling: TrendScaling,
    cinv_f: DMatrix<f64>,
    a_inv: DMatrix<f64>,
    beta: DVector<f64>,
    resid_w: DVector<f64>,
}

impl<'a> KrigingSystem<'a> {
    pub fn new(obs: &'a [KrigingObs], model: KrigingModel) -> Result<Self, KrigingError> {
        let n = obs.len();
        let p = model.trend.n_terms();
        if n <= p {
            return Err(KrigingError::TooFewObservations { n, p });
        }
        let mut dist = DMatrix::zeros(n, n);
        let mut dups = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let d = great_circle_miles(obs[i].loc, obs[j].loc);
                if d < 1e-9 {
                    dups.push((obs[i].site_id.clone(), obs[j].site_id.clone()));
                }
                dist[(i, j)] = d;
                dist[(j, i)] = d;
            }
        }
        if !dups.is_empty() && model.nugget == 0.0 {
            return Err(KrigingError::DuplicateSites(dups));
        }
        let c = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                model.covariance(0.0)
            } else {
                // a duplicate site shares the sill but not the nugget
                model.sigma2 * (-dist[(i, j)] / model.range_miles).exp()
            }
        });
        let chol = c.cholesky().ok_or(KrigingError::Singular)?;
        let (f, scaling) = trend_matrix(obs, model.trend);
        let z = DVector::from_iterator(n, obs.iter().map(|o| o.value));
        let cinv_f = chol.solve(&f);
        let a = f.transpose() * &cinv_f;
        let a_inv = a.cholesky().ok_or(KrigingError::Singular)?.inverse();
        let cinv_z = chol.solve(&z);
        let beta = &a_inv * (f.transpose() * &cinv_z);
        let resid_w = chol.solve(&(&z - &f * &beta));
        Ok(KrigingSystem { obs, model, chol, f, scaling, cinv_f, a_inv, beta, resid_w })
    }

    fn cov_vector(&self, t: &KrigingTarget) -> DVector<f64> {
        DVector::from_iterator(
            self.obs.len(),
            self.obs.iter().map(|o| {
                let h = great_circle_miles(o.loc, t.loc);
                self.model.covariance(h)
            }),
        )
    }

    fn trend_row(&self, t: &KrigingTarget) -> DVector<f64> {
        DVector::from_vec(self.scaling.apply(&self.model.trend.raw_row(t.loc, t.elev)))
    }

    /// Generalized least squares estimate of the trend at `t`.
    pub fn trend_value(&self, t: &KrigingTarget) -> f64 {
        self.trend_row(t).dot(&self.beta)
    }

    pub fn predict(&self, t: &KrigingTarget) -> KrigingPrediction {
        // without a nugget the predictor interpolates; skip the cancellation-prone variance
        if self.model.nugget == 0.0 {
            if let Some(o) = self.obs.iter().find(|o| great_circle_miles(o.loc, t.loc) == 0.0 && o.elev == t.elev) {
                return KrigingPrediction { site_id: t.site_id.clone(), prediction: o.value, se: 0.0 };
            }
        }
        let c0 = self.cov_vector(t);
        let f0 = self.trend_row(t);
        let prediction = f0.dot(&self.beta) + c0.dot(&self.resid_w);
        let cinv_c0 = self.chol.solve(&c0);
        let r = &f0 - self.f.transpose() * &cinv_c0;
        let var = self.model.covariance(0.0) - c0.dot(&cinv_c0) + r.dot(&(&self.a_inv * &r));
        KrigingPrediction { site_id: t.site_id.clone(), prediction, se: var.max(0.0).sqrt() }
    }

    /// Weights `w` with `prediction = w' z`.
    pub fn weights(&self, t: &KrigingTarget) -> Vec<f64> {
        let c0 = self.cov_vector(t);
        let f0 = self.trend_row(t);
        let cinv_c0 = self.chol.solve(&c0);
        let r = &f0 - self.f.transpose() * &cinv_c0;
        let w = cinv_c0 + &self.cinv_f * (&self.a_inv * r);
        w.iter().copied().collect()
    }
}

/// Universal kriging predictions with standard errors at each target.
pub fn universal_krige(
    obs: &[KrigingObs],
    targets: &[KrigingTarget],
    model: &KrigingModel,
) -> Result<Vec<KrigingPrediction>, KrigingError> {
    let system = KrigingSystem::new(obs, *model)?;
    Ok(targets.iter().map(|t| system.predict(t)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiteRatio {
    pub site_id: String,
    pub kriged: f64,
    pub modeled: f64,
    /// `None` when the modeled value is not positive.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionComparison {
    pub sites: Vec<SiteRatio>,
    pub q05: Option<f64>,
    pub q50: Option<f64>,
    pub q95: Option<f64>,
}

/// Linear-interpolation quantile of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// Per-site kriged / modeled ratios with 5%, 50% and 95% quantiles.
pub fn compare_predictions(
    kriged: &[KrigingPrediction],
    modeled: &[(String, f64)],
) -> Result<PredictionComparison, KrigingError> {
    if kriged.len() != modeled.len() || kriged.iter().zip(modeled).any(|(k, m)| k.site_id != m.0) {
        return Err(KrigingError::TargetMismatch);
    }
    let sites: Vec<SiteRatio> = kriged
        .iter()
        .zip(modeled)
        .map(|(k, (id, m))| SiteRatio {
            site_id: id.clone(),
            kriged: k.prediction,
            modeled: *m,
            ratio: (*m > 0.0).then(|| k.prediction / m),
        })
        .collect();
    let mut ratios: Vec<f64> = sites.iter().filter_map(|s| s.ratio).collect();
    ratios.sort_by(f64::total_cmp);
    Ok(PredictionComparison {
        q05: quantile_sorted(&ratios, 0.05),
        q50: quantile_sorted(&ratios, 0.5),
        q95: quantile_sorted(&ratios, 0.95),
        sites,
    })
}
