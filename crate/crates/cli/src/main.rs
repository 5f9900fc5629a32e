//! `insar-ts` command-line front end.
//!
//! Exit status: 0 on success, 1 when the configuration or inputs are
//! invalid, 2 when processing fails.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use insar_ts::georef::stats_of;
use insar_ts::pipeline::{
    load_product, run_pipeline, simulate, write_inputs, PipelineConfig, RunOptions, StageError, VELOCITY_CSV,
};
use insar_ts::product::{csv_rows, format_csv, read_csv, write_atomic, CsvRow};
use insar_ts::Error;

#[derive(Debug, Parser)]
#[command(name = "insar-ts", version, about = "Small-baseline InSAR time-series processing")]
struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the scene seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Output folder; overrides the configuration.
    #[arg(long, global = true, value_name = "DIR")]
    output: Option<PathBuf>,
    /// Keep the GIA signal in the primary product.
    #[arg(long, global = true)]
    skip_gia: bool,
    /// Log stage progress to stderr.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a scene and write it as a stack-mode input set.
    Simulate,
    /// Run every stage and write the products.
    Run,
    /// Summary statistics of a velocity CSV.
    Stats {
        /// Defaults to `<output>/velocity.csv`.
        csv: Option<PathBuf>,
    },
    /// Re-export a run's product.
    Export {
        #[arg(long, value_enum, default_value_t = ExportFormat::Csv)]
        format: ExportFormat,
        /// Destination file; standard output when absent.
        #[arg(long, value_name = "PATH")]
        to: Option<PathBuf>,
    },
    /// Write CDF and velocity-map tables for external plotting.
    Plot {
        /// Defaults to `<output>/velocity.csv`.
        csv: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ExportFormat {
    Csv,
    Timeseries,
    Json,
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<StageError> for Failure {
    fn from(e: StageError) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn config_failure(e: Error) -> Failure {
    Failure::Validation(format!("configuration: {e}"))
}

fn runtime(e: Error) -> Failure {
    Failure::Runtime(e.to_string())
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path).map_err(config_failure)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = Some(seed);
    }
    if let Some(out) = &cli.output {
        cfg.output = out.clone();
    }
    cfg.validate().map_err(config_failure)?;
    Ok(cfg)
}

fn default_csv(cfg: &PipelineConfig, given: &Option<PathBuf>) -> PathBuf {
    given.clone().unwrap_or_else(|| cfg.output.join(VELOCITY_CSV))
}

fn read_rows(path: &Path) -> Result<Vec<CsvRow>, Failure> {
    match read_csv(path) {
        Ok(rows) => Ok(rows),
        Err(e @ (Error::Parse { .. } | Error::Io { .. })) => Err(Failure::Validation(e.to_string())),
        Err(e) => Err(runtime(e)),
    }
}

fn cmd_simulate(cfg: &PipelineConfig) -> Result<(), Failure> {
    if cfg.is_stack_mode() {
        return Err(Failure::Validation("simulate needs a scene configuration, not a stack".into()));
    }
    let inputs = simulate(cfg).map_err(config_failure)?;
    write_inputs(&inputs, cfg, &cfg.output).map_err(runtime)?;
    println!(
        "simulated {} acquisitions, {} pairs, {} pixels into {}",
        inputs.catalog.len(),
        inputs.stack.n_pairs(),
        inputs.stack.n_pixels(),
        cfg.output.display()
    );
    println!("process with: insar-ts run --config {}", cfg.output.join("pipeline.toml").display());
    Ok(())
}

fn cmd_run(cfg: &PipelineConfig, skip_gia: bool) -> Result<(), Failure> {
    let out = run_pipeline(cfg, RunOptions { skip_gia })?;
    let s = &out.stats;
    println!("elite pixels  {}", out.elite.len());
    println!("csv rows      {}", out.csv_rows);
    println!("median        {:.4} mm/yr", s.median);
    println!("min / max     {:.4} / {:.4} mm/yr", s.min, s.max);
    println!("output        {}", cfg.output.display());
    Ok(())
}

fn cmd_stats(path: &Path) -> Result<(), Failure> {
    let rows = read_rows(path)?;
    let rates: Vec<f64> = rows.iter().map(|r| r.rate_cm_yr * 10.0).collect();
    let stats = stats_of(&rates).map_err(runtime)?;
    let summary = serde_json::json!({
        "file": path,
        "count": stats.count,
        "median_mm_yr": stats.median,
        "min_mm_yr": stats.min,
        "max_mm_yr": stats.max,
    });
    println!("{}", serde_json::to_string_pretty(&summary).expect("summary serialises"));
    Ok(())
}

fn cmd_export(cfg: &PipelineConfig, format: ExportFormat, to: Option<&Path>) -> Result<(), Failure> {
    let product = load_product(&cfg.output.join("product.json")).map_err(runtime)?;
    let text = match format {
        ExportFormat::Csv => format_csv(&csv_rows(&product)),
        ExportFormat::Timeseries => product.timeseries_table(),
        ExportFormat::Json => serde_json::to_string_pretty(&product).expect("product serialises") + "\n",
    };
    match to {
        Some(path) => write_atomic(path, text.as_bytes()).map_err(runtime),
        None => {
            let mut stdout = std::io::stdout().lock();
            match stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Failure::Runtime(format!("stdout: {e}"))),
                _ => Ok(()),
            }
        }
    }
}

fn cmd_plot(cfg: &PipelineConfig, path: &Path) -> Result<(), Failure> {
    let rows = read_rows(path)?;
    let rates: Vec<f64> = rows.iter().map(|r| r.rate_cm_yr * 10.0).collect();
    let stats = stats_of(&rates).map_err(runtime)?;
    let mut cdf = String::from("# insar-ts cdf v1\nrate_mm_yr,fraction\n");
    for (v, f) in &stats.cdf {
        let _ = writeln!(cdf, "{v:.4},{f:.6}");
    }
    let mut map = String::from("# insar-ts map v1\nlon,lat,rate_mm_yr\n");
    for r in &rows {
        let _ = writeln!(map, "{:.6},{:.6},{:.4}", r.lon, r.lat, r.rate_cm_yr * 10.0);
    }
    let dir = cfg.output.join("plot");
    write_atomic(&dir.join("cdf.txt"), cdf.as_bytes()).map_err(runtime)?;
    write_atomic(&dir.join("map.txt"), map.as_bytes()).map_err(runtime)?;
    println!("wrote {} and {}", dir.join("cdf.txt").display(), dir.join("map.txt").display());
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Simulate => cmd_simulate(&cfg),
        Command::Run => cmd_run(&cfg, cli.skip_gia),
        Command::Stats { csv } => cmd_stats(&default_csv(&cfg, csv)),
        Command::Export { format, to } => cmd_export(&cfg, *format, to.as_deref()),
        Command::Plot { csv } => cmd_plot(&cfg, &default_csv(&cfg, csv)),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();

    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
