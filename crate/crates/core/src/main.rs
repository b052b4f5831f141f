use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use downscale::io::{
    run_pipeline, write_grid_data, write_station_data, PipelineConfig, Stage, DAILY_FILE, FUTURE_GRID_FILE,
    GRID_FILE, STATIONS_FILE,
};
use downscale::series::YearRange;
use downscale::synth::{simulate_network, NetworkConfig};

/// Extreme daily precipitation: point-process fits and grid-to-point downscaling.
#[derive(Parser)]
#[command(name = "downscale", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic station network and grid into the data directory.
    Simulate(SimulateArgs),
    /// Fit every station and write station_fits.csv.
    FitStations(RunArgs),
    /// Also fit the grid cells.
    FitGrid(RunArgs),
    /// Also pair stations with cells, run the regression and the variogram.
    Regress(RunArgs),
    /// Also krige to holdout and excluded stations.
    Krige(RunArgs),
    /// Also compute future/present return-level ratios.
    Ratio(RunArgs),
    /// Run everything, including the averaging comparison and the map.
    Report(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Flat key=value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input directory holding stations.csv, daily.csv and grid_daily.csv.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// DJF, MAM, JJA or SON.
    #[arg(long)]
    season: Option<String>,
    #[arg(long)]
    percentile: Option<f64>,
    #[arg(long)]
    return_period: Option<f64>,
    #[arg(long)]
    missing_cutoff: Option<f64>,
    /// Lat/lon polynomial degree of the regression (0 to 4).
    #[arg(long)]
    degree: Option<u8>,
    #[arg(long)]
    range_miles: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Choose the regression degree by AIC instead of using --degree.
    #[arg(long)]
    auto_select: bool,
}

impl RunArgs {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut o = Vec::new();
        let mut put = |k: &'static str, v: Option<String>| {
            if let Some(v) = v {
                o.push((k, v));
            }
        };
        put("data_dir", self.data_dir.as_ref().map(|p| p.display().to_string()));
        put("out_dir", self.out_dir.as_ref().map(|p| p.display().to_string()));
        put("season", self.season.clone());
        put("percentile", self.percentile.map(|v| v.to_string()));
        put("return_period", self.return_period.map(|v| v.to_string()));
        put("missing_cutoff", self.missing_cutoff.map(|v| v.to_string()));
        put("degree", self.degree.map(|v| v.to_string()));
        put("range_miles", self.range_miles.map(|v| v.to_string()));
        put("seed", self.seed.map(|v| v.to_string()));
        put("auto_select", self.auto_select.then(|| "true".to_string()));
        o
    }

    fn config(&self) -> Result<PipelineConfig> {
        let env = std::env::var("DATA_DIR").ok();
        let o = self.overrides();
        let refs: Vec<(&str, String)> = o.iter().map(|(k, v)| (*k, v.clone())).collect();
        PipelineConfig::resolve(self.config.as_deref(), env.as_deref(), &refs).context("invalid configuration")
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, env = "DATA_DIR", default_value = "data")]
    data_dir: PathBuf,
    #[arg(long, default_value_t = 50)]
    stations: usize,
    #[arg(long, default_value_t = 2)]
    n_lat: usize,
    #[arg(long, default_value_t = 2)]
    n_lon: usize,
    #[arg(long, default_value_t = 1950)]
    first_year: i32,
    #[arg(long, default_value_t = 1999)]
    last_year: i32,
    /// Also write future-scenario grid data for these years (e.g. 2070-2099).
    #[arg(long)]
    future: Option<String>,
    #[arg(long, default_value_t = 0.0)]
    missing_rate: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let future_years = match &a.future {
        None => None,
        Some(s) => {
            let (f, l) = s.split_once('-').context("--future expects FIRST-LAST")?;
            Some(YearRange::new(f.trim().parse()?, l.trim().parse()?)?)
        }
    };
    let cfg = NetworkConfig {
        n_stations: a.stations,
        n_lat: a.n_lat,
        n_lon: a.n_lon,
        years: YearRange::new(a.first_year, a.last_year)?,
        future_years,
        missing_rate: a.missing_rate,
        seed: a.seed,
        ..NetworkConfig::default()
    };
    let net = simulate_network(&cfg)?;
    std::fs::create_dir_all(&a.data_dir).with_context(|| format!("creating {}", a.data_dir.display()))?;
    write_station_data(&a.data_dir.join(STATIONS_FILE), &a.data_dir.join(DAILY_FILE), &net.stations)?;
    write_grid_data(&a.data_dir.join(GRID_FILE), &net.cells)?;
    if !net.future_cells.is_empty() {
        write_grid_data(&a.data_dir.join(FUTURE_GRID_FILE), &net.future_cells)?;
    }
    println!(
        "wrote {} stations and {} cells to {}",
        net.stations.len(),
        net.cells.len(),
        a.data_dir.display()
    );
    Ok(())
}

fn run(args: &RunArgs, stage: Stage) -> Result<()> {
    let cfg = args.config()?;
    let report = run_pipeline(&cfg, stage).with_context(|| format!("{} failed", stage.name()))?;
    for w in &report.load.warnings {
        eprintln!("warning: {w}");
    }
    if !report.load.rejected.is_empty() {
        eprintln!("{} input rows rejected", report.load.rejected.len());
    }
    println!(
        "{} stations, {} excluded ({} failed fits); outputs in {}",
        report.n_stations,
        report.exclusions.len(),
        report.n_failed_fits,
        cfg.out_dir.display()
    );
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::FitStations(a) => run(a, Stage::FitStations),
        Command::FitGrid(a) => run(a, Stage::FitGrid),
        Command::Regress(a) => run(a, Stage::Regress),
        Command::Krige(a) => run(a, Stage::Krige),
        Command::Ratio(a) => run(a, Stage::Ratio),
        Command::Report(a) => run(a, Stage::Report),
    }
}
