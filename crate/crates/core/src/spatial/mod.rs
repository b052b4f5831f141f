//! Distances, empirical variograms and universal kriging.

mod kriging;
mod variogram;

pub use kriging::{
    compare_predictions, estimate_sill, universal_krige, KrigingError, KrigingModel, KrigingObs,
    KrigingPrediction, KrigingSystem, KrigingTarget, PredictionComparison, SiteRatio, Trend,
};
pub use variogram::{empirical_variogram, Variogram, VariogramBin};

/// Mean Earth radius in statute miles.
pub const EARTH_RADIUS_MILES: f64 = 3958.8;
/// Exponential covariance range used for kriging (about 250 km).
pub const DEFAULT_RANGE_MILES: f64 = 155.0;
pub const DEFAULT_MAX_LAG_MILES: f64 = 600.0;
pub const DEFAULT_VARIOGRAM_BINS: usize = 30;

/// Geographic position in degrees (longitude negative west).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Self {
        LatLon { lat, lon }
    }
}

/// Haversine distance in miles.
pub fn great_circle_miles(a: LatLon, b: LatLon) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dp = p2 - p1;
    let dl = (b.lon - a.lon).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_MILES * h.sqrt().min(1.0).asin()
}
