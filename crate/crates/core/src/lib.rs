//! Point-process extreme value analysis of daily precipitation and statistical
//! downscaling of gridded return levels to point locations.
//!
//! Levels are carried in tenths of a millimeter throughout.

pub mod evd;
pub mod fitting;
pub mod optim;
pub mod preprocess;
pub mod series;
pub mod synth;
pub mod regression;
pub mod spatial;
pub mod scenario;
pub mod io;
