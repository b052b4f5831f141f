//! CSV ingestion and output, run configuration, the end-to-end pipeline and
//! SVG maps.

mod config;
mod data;
mod pipeline;
mod svg;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{ConfigError, PipelineConfig};
pub use data::{
    fmt_num, load_grid_data, load_station_data, load_station_metadata, write_grid_data, write_station_data,
    write_table, LoadReport, RejectedRow, StationMeta, DAILY_HEADER, GRID_HEADER, STATIONS_HEADER,
};
pub use pipeline::{
    run_pipeline, Exclusion, ExclusionCause, PipelineError, PipelineReport, Stage, DAILY_FILE, FUTURE_GRID_FILE,
    GRID_FILE, STATIONS_FILE,
};
pub use svg::{render_map, render_map_svg, MapPoint};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: expected header '{expected}', found '{found}'")]
    Header { path: PathBuf, expected: String, found: String },
    #[error("cell {cell_id} at line {line}: coordinates {found:?} differ from {first:?}")]
    InconsistentCell { cell_id: String, line: u64, first: (f64, f64), found: (f64, f64) },
    #[error(transparent)]
    Series(#[from] crate::series::SeriesError),
    #[error("nothing to draw")]
    EmptyMap,
}

impl IoError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io { path: path.to_path_buf(), source }
    }

    fn csv(path: &Path, source: csv::Error) -> Self {
        IoError::Csv { path: path.to_path_buf(), source }
    }
}

/// Six decimals, or `NA` when absent or not finite.
pub fn fmt_opt(x: Option<f64>) -> String {
    match x {
        Some(v) if v.is_finite() => format!("{v:.6}"),
        _ => "NA".into(),
    }
}
