//! `recouple` — batch forecasting runs over decoupled/recoupled models.
//!
//! Four commands share one report pipeline: `fit` (one-step filtering with
//! PITs and log scores), `forecast` (k-step path quantiles after filtering),
//! `compare` (power-discounted model probabilities across configurations),
//! and `netflow` (network-flow monitoring with gravity decompositions).
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
//! error, 5 degenerate importance weights or monitor abort.

mod config;
mod data;
mod error;
mod report;
mod runs;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{Kind, RunConfig};
use crate::error::{CliError, Result};
use crate::report::{columns, Format, ReportWriter, RunMeta};

/// Environment variable naming the worker count, honored iff `--workers`
/// is absent.
const THREADS_ENV: &str = "RECOUPLE_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Jsonl,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Format {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Jsonl => Format::Jsonl,
        }
    }
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Run configuration (versioned JSON). `compare` accepts the flag
    /// several times, every other command exactly once.
    #[arg(long, required = true)]
    config: Vec<PathBuf>,
    /// Input data: wide CSV panel (fit/forecast/compare) or long flow
    /// table (netflow).
    #[arg(long)]
    data: PathBuf,
    /// Forecast horizon k (default 12).
    #[arg(long)]
    horizon: Option<usize>,
    /// Monte Carlo sample count N (default 5000).
    #[arg(long)]
    samples: Option<usize>,
    /// Master seed (default 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Model power-discount α for compare (default 0.99).
    #[arg(long)]
    alpha: Option<f64>,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report encoding.
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    /// Worker threads (default: all cores; RECOUPLE_THREADS when the flag
    /// is absent).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Parser)]
#[command(
    name = "recouple",
    version,
    about = "Batch filtering, forecasting, model comparison, and flow monitoring"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sequential one-step filtering: forecast quantiles, PITs, log scores.
    Fit(CommonArgs),
    /// Filter the panel, then emit k-step joint path quantiles.
    Forecast {
        #[command(flatten)]
        common: CommonArgs,
        /// Also emit every raw forecast draw as `sample` records.
        #[arg(long)]
        raw_samples: bool,
    },
    /// Run several configurations over one panel and score them against
    /// each other with power-discounted model probabilities.
    Compare(CommonArgs),
    /// Per-pair network-flow filtering with monitors and gravity
    /// decompositions.
    Netflow(CommonArgs),
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit(common) => {
            configure_workers(&common)?;
            let (cfg, meta, _) = load_single(&common)?;
            if cfg.kind == Kind::Netflow {
                return Err(CliError::config(
                    "kind \"netflow\" runs via the netflow command, not fit",
                ));
            }
            let panel = data::read_wide_panel(&common.data, &cfg.series_names())?;
            let mut writer = open_writer(&common, columns::fit())?;
            runs::run_fit(&cfg, &panel, &meta, &mut writer)?;
            writer.finish()
        }
        Command::Forecast { common, raw_samples } => {
            configure_workers(&common)?;
            let (cfg, meta, _) = load_single(&common)?;
            if cfg.kind == Kind::Netflow {
                return Err(CliError::config(
                    "kind \"netflow\" runs via the netflow command, not forecast",
                ));
            }
            let panel = data::read_wide_panel(&common.data, &cfg.series_names())?;
            let mut writer = open_writer(&common, columns::forecast(raw_samples))?;
            runs::run_forecast(&cfg, &panel, &meta, raw_samples, &mut writer)?;
            writer.finish()
        }
        Command::Compare(common) => {
            configure_workers(&common)?;
            if common.config.len() < 2 {
                return Err(CliError::config(format!(
                    "compare needs at least two --config files, got {}",
                    common.config.len()
                )));
            }
            let mut configs = Vec::with_capacity(common.config.len());
            for path in &common.config {
                configs.push(load_config(path, &common)?);
            }
            for cfg in &configs {
                if cfg.kind == Kind::Netflow {
                    return Err(CliError::config(
                        "kind \"netflow\" cannot enter a compare run; compare works over series panels",
                    ));
                }
            }
            let alpha = common.alpha.unwrap_or_else(|| configs[0].alpha());
            if !(alpha > 0.0 && alpha <= 1.0) {
                return Err(CliError::config(format!(
                    "power discount alpha must lie in (0, 1], got {alpha}"
                )));
            }
            let model_names = model_names(&common.config);
            let data_bytes = read_data_bytes(&common.data)?;
            let combined = {
                let canonicals: Vec<String> =
                    configs.iter().map(RunConfig::canonical_json).collect();
                format!("alpha={alpha};{}", canonicals.join("\u{1f}"))
            };
            let combined_hash = {
                use sha2::{Digest, Sha256};
                let mut h = Sha256::new();
                h.update(combined.as_bytes());
                config::hex_prefix(&h.finalize(), 12)
            };
            let seed = configs[0].seed();
            let meta = RunMeta::derive(&combined, &combined_hash, seed, &data_bytes);
            let mut panels = Vec::with_capacity(configs.len());
            for cfg in &configs {
                panels.push(data::read_wide_panel(&common.data, &cfg.series_names())?);
            }
            let mut writer = open_writer(&common, columns::compare())?;
            runs::run_compare(&configs, &model_names, &panels, alpha, &meta, &mut writer)?;
            writer.finish()
        }
        Command::Netflow(common) => {
            configure_workers(&common)?;
            let (cfg, meta, _) = load_single(&common)?;
            if cfg.kind != Kind::Netflow {
                return Err(CliError::config(
                    "the netflow command needs a config with kind \"netflow\"",
                ));
            }
            let nodes = cfg
                .network
                .as_ref()
                .expect("validated: netflow kind has a network section")
                .nodes;
            let table = data::read_flow_table(&common.data, nodes)?;
            let mut writer = open_writer(&common, columns::netflow())?;
            runs::run_netflow(&cfg, &table, &meta, &mut writer)?;
            writer.finish()
        }
    }
}

/// Build the global worker pool: `--workers` wins, RECOUPLE_THREADS is
/// honored iff the flag is absent, default otherwise.
fn configure_workers(common: &CommonArgs) -> Result<()> {
    let threads = match common.workers {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(v.parse::<usize>().map_err(|_| {
                CliError::config(format!(
                    "{THREADS_ENV}=\"{v}\" is not a valid worker count"
                ))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = threads {
        if n > 0 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::config(format!("worker pool: {e}")))?;
        }
    }
    Ok(())
}

fn load_config(path: &Path, common: &CommonArgs) -> Result<RunConfig> {
    let bytes = std::fs::read(path).map_err(|e| {
        CliError::config(format!("cannot read config {}: {e}", path.display()))
    })?;
    let mut cfg = RunConfig::from_bytes(&bytes, &path.display().to_string())?;
    cfg.apply_overrides(common.samples, common.horizon, common.alpha, common.seed);
    Ok(cfg)
}

fn read_data_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path)
        .map_err(|e| CliError::data(format!("cannot read data {}: {e}", path.display())))
}

/// Load the single config a non-compare command takes, derive run identity.
fn load_single(common: &CommonArgs) -> Result<(RunConfig, RunMeta, Vec<u8>)> {
    if common.config.len() != 1 {
        return Err(CliError::config(format!(
            "this command takes exactly one --config, got {}",
            common.config.len()
        )));
    }
    let cfg = load_config(&common.config[0], common)?;
    let data_bytes = read_data_bytes(&common.data)?;
    let meta =
        RunMeta::derive(&cfg.canonical_json(), &cfg.config_hash(), cfg.seed(), &data_bytes);
    Ok((cfg, meta, data_bytes))
}

fn open_writer(common: &CommonArgs, cols: Vec<&'static str>) -> Result<ReportWriter> {
    ReportWriter::new(common.out.as_deref(), common.format.into(), cols)
}

/// Unique, deterministic model labels from config file stems.
fn model_names(paths: &[PathBuf]) -> Vec<String> {
    let stems: Vec<String> = paths
        .iter()
        .map(|p| {
            p.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string())
        })
        .collect();
    let mut names = Vec::with_capacity(stems.len());
    for (i, stem) in stems.iter().enumerate() {
        if stems.iter().filter(|s| *s == stem).count() > 1 {
            names.push(format!("{stem}#{i}"));
        } else {
            names.push(stem.clone());
        }
    }
    names
}
