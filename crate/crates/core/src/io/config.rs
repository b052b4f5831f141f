use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::fitting::AnalysisConfig;
use crate::series::{Season, YearRange};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected key=value, found '{text}'")]
    Syntax { line: usize, text: String },
    #[error("unknown config key '{0}'")]
    UnknownKey(String),
    #[error("bad value '{value}' for {key}: {reason}")]
    Value { key: String, value: String, reason: String },
    #[error("cannot read config {path}: {reason}")]
    Read { path: PathBuf, reason: String },
}

/// Settings for a full pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub season: Season,
    pub percentile: f64,
    pub return_period: f64,
    pub missing_cutoff: f64,
    pub years: YearRange,
    pub future_years: YearRange,
    pub grid_spacing: f64,
    /// Lat/lon surface degree used when `auto_select` is off.
    pub degree: u8,
    pub auto_select: bool,
    pub range_miles: f64,
    /// Fraction of paired stations withheld from regression and kriging.
    pub holdout_fraction: f64,
    /// Significance level of the ratio indicators.
    pub alpha: f64,
    /// Cells need this many stations for the averaging comparison.
    pub triple_min_stations: usize,
    pub seed: u64,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            season: Season::Djf,
            percentile: 0.95,
            return_period: 100.0,
            missing_cutoff: 0.1,
            years: YearRange { first: 1950, last: 1999 },
            future_years: YearRange { first: 2070, last: 2099 },
            grid_spacing: 2.5,
            degree: 3,
            auto_select: false,
            range_miles: 155.0,
            holdout_fraction: 0.1,
            alpha: 0.05,
            triple_min_stations: 65,
            seed: 20240101,
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("out"),
        }
    }
}

fn bad(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Value { key: key.into(), value: value.into(), reason: reason.into() }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| bad(key, value, "not a number"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(bad(key, value, "expected true or false")),
    }
}

impl PipelineConfig {
    pub fn analysis(&self) -> AnalysisConfig {
        AnalysisConfig {
            season: self.season,
            years: self.years,
            percentile: self.percentile,
            missing_cutoff: self.missing_cutoff,
            return_period: self.return_period,
        }
    }

    pub fn future_analysis(&self) -> AnalysisConfig {
        AnalysisConfig { years: self.future_years, ..self.analysis() }
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "season" => self.season = value.parse().map_err(|e: crate::series::SeriesError| bad(key, value, e.to_string()))?,
            "percentile" => self.percentile = num(key, value)?,
            "return_period" => self.return_period = num(key, value)?,
            "missing_cutoff" => self.missing_cutoff = num(key, value)?,
            "first_year" => self.years.first = num(key, value)?,
            "last_year" => self.years.last = num(key, value)?,
            "future_first_year" => self.future_years.first = num(key, value)?,
            "future_last_year" => self.future_years.last = num(key, value)?,
            "grid_spacing" => self.grid_spacing = num(key, value)?,
            "degree" => self.degree = num(key, value)?,
            "auto_select" => self.auto_select = parse_bool(key, value)?,
            "range_miles" => self.range_miles = num(key, value)?,
            "holdout_fraction" => self.holdout_fraction = num(key, value)?,
            "alpha" => self.alpha = num(key, value)?,
            "triple_min_stations" => self.triple_min_stations = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "data_dir" => self.data_dir = PathBuf::from(value),
            "out_dir" => self.out_dir = PathBuf::from(value),
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    /// Applies a `key = value` text; `#` starts a comment line.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line: i + 1, text: raw.to_string() })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Read { path: path.to_path_buf(), reason: e.to_string() })?;
        self.apply_text(&text)
    }

    /// Defaults, then `DATA_DIR`, then the config file, then explicit overrides.
    pub fn resolve(
        file: Option<&Path>,
        env_data_dir: Option<&str>,
        overrides: &[(&str, String)],
    ) -> Result<Self, ConfigError> {
        let mut cfg = PipelineConfig::default();
        if let Some(dir) = env_data_dir.filter(|d| !d.is_empty()) {
            cfg.data_dir = PathBuf::from(dir);
        }
        if let Some(f) = file {
            cfg.apply_file(f)?;
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let check = |ok: bool, key: &str, value: String, reason: &str| {
            if ok {
                Ok(())
            } else {
                Err(bad(key, &value, reason))
            }
        };
        check((0.90..=0.99).contains(&self.percentile), "percentile", self.percentile.to_string(), "must lie in [0.90, 0.99]")?;
        check(self.missing_cutoff > 0.0 && self.missing_cutoff <= 0.5, "missing_cutoff", self.missing_cutoff.to_string(), "must lie in (0, 0.5]")?;
        check(self.degree <= 4, "degree", self.degree.to_string(), "must be 0 to 4")?;
        check(self.return_period > 1.0 && self.return_period.is_finite(), "return_period", self.return_period.to_string(), "must exceed 1")?;
        check(self.years.first <= self.years.last, "last_year", self.years.last.to_string(), "before first_year")?;
        check(self.future_years.first <= self.future_years.last, "future_last_year", self.future_years.last.to_string(), "before future_first_year")?;
        check(self.grid_spacing > 0.0 && self.grid_spacing.is_finite(), "grid_spacing", self.grid_spacing.to_string(), "must be positive")?;
        check(self.range_miles > 0.0 && self.range_miles.is_finite(), "range_miles", self.range_miles.to_string(), "must be positive")?;
        check((0.0..1.0).contains(&self.holdout_fraction), "holdout_fraction", self.holdout_fraction.to_string(), "must lie in [0, 1)")?;
        check(self.alpha > 0.0 && self.alpha < 1.0, "alpha", self.alpha.to_string(), "must lie in (0, 1)")?;
        Ok(())
    }

    /// Key=value form accepted by [`PipelineConfig::apply_text`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").expect("string write");
        kv("season", self.season.code().to_string());
        kv("percentile", self.percentile.to_string());
        kv("return_period", self.return_period.to_string());
        kv("missing_cutoff", self.missing_cutoff.to_string());
        kv("first_year", self.years.first.to_string());
        kv("last_year", self.years.last.to_string());
        kv("future_first_year", self.future_years.first.to_string());
        kv("future_last_year", self.future_years.last.to_string());
        kv("grid_spacing", self.grid_spacing.to_string());
        kv("degree", self.degree.to_string());
        kv("auto_select", self.auto_select.to_string());
        kv("range_miles", self.range_miles.to_string());
        kv("holdout_fraction", self.holdout_fraction.to_string());
        kv("alpha", self.alpha.to_string());
        kv("triple_min_stations", self.triple_min_stations.to_string());
        kv("seed", self.seed.to_string());
        kv("data_dir", self.data_dir.display().to_string());
        kv("out_dir", self.out_dir.display().to_string());
        s
    }
}
