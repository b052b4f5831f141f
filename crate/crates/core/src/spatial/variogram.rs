use super::{great_circle_miles, LatLon};

#[derive(Debug, Clone, PartialEq)]
pub struct VariogramBin {
    pub lower: f64,
    pub upper: f64,
    /// Mean pair distance; `None` for an empty bin.
    pub mean_distance: Option<f64>,
    /// Semivariance; `None` for an empty bin.
    pub semivariance: Option<f64>,
    pub pairs: usize,
}

impl VariogramBin {
    pub fn center(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variogram {
    pub max_lag: f64,
    pub bins: Vec<VariogramBin>,
}

impl Variogram {
    pub fn total_pairs(&self) -> usize {
        self.bins.iter().map(|b| b.pairs).sum()
    }
}

/// Classical (Matheron) estimator over equal-width distance bins up to
/// `max_lag` miles. Pairs at exactly `max_lag` fall in the last bin.
pub fn empirical_variogram(residuals: &[f64], locations: &[LatLon], max_lag: f64, n_bins: usize) -> Variogram {
    assert_eq!(residuals.len(), locations.len(), "one location per residual");
    let n_bins = n_bins.max(1);
    let width = max_lag / n_bins as f64;
    let mut sum_sq = vec![0.0; n_bins];
    let mut sum_d = vec![0.0; n_bins];
    let mut count = vec![0usize; n_bins];
    for i in 0..residuals.len() {
        for j in (i + 1)..residuals.len() {
            let d = great_circle_miles(locations[i], locations[j]);
            if d > max_lag {
                continue;
            }
            let b = ((d / width) as usize).min(n_bins - 1);
            let diff = residuals[i] - residuals[j];
            sum_sq[b] += diff * diff;
            sum_d[b] += d;
            count[b] += 1;
        }
    }
    let bins = (0..n_bins)
        .map(|b| {
            let c = count[b];
            VariogramBin {
                lower: b as f64 * width,
                upper: (b + 1) as f64 * width,
                mean_distance: (c > 0).then(|| sum_d[b] / c as f64),
                semivariance: (c > 0).then(|| sum_sq[b] / (2.0 * c as f64)),
                pairs: c,
            }
        })
        .collect();
    Variogram { max_lag, bins }
}
