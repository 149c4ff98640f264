//! `sci`: simulate regime datasets, reproduce the validation
//! experiments, compute the index on trade tapes, and replay tapes
//! through the rolling monitor.

mod commands;
mod manifest;

use clap::{Args, Parser, Subcommand};
use std::fmt;
use std::path::PathBuf;

use manifest::RunManifest;

/// Errors mapped onto process exit codes: 2 config, 3 data, 4 numerical.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Numerical(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical error: {m}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<sci_core::dgp::DgpError> for CliError {
    fn from(e: sci_core::dgp::DgpError) -> Self {
        use sci_core::dgp::DgpError::*;
        match &e {
            UnknownSpec(_) | InvalidParam(_) | ParamNotApplicable { .. } => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<sci_core::eval::EvalError> for CliError {
    fn from(e: sci_core::eval::EvalError) -> Self {
        use sci_core::dgp::DgpError;
        use sci_core::eval::EvalError::*;
        match &e {
            Singular | NotConverged => CliError::Numerical(e.to_string()),
            InvalidParam(_) => CliError::Config(e.to_string()),
            Dgp(
                DgpError::UnknownSpec(_)
                | DgpError::InvalidParam(_)
                | DgpError::ParamNotApplicable { .. },
            ) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<sci_core::ingest::IngestError> for CliError {
    fn from(e: sci_core::ingest::IngestError) -> Self {
        use sci_core::ingest::IngestError::*;
        match &e {
            BadSpec(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<sci_core::metrics::MetricsError> for CliError {
    fn from(e: sci_core::metrics::MetricsError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<sci_core::cluster::ClusterError> for CliError {
    fn from(e: sci_core::cluster::ClusterError) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "sci",
    version,
    about = "Signal credibility index toolkit: simulation, evaluation, and tape analysis"
)]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// TOML run manifest; flags override individual fields.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory override (env: SCI_OUT_DIR).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Paths per DGP override.
    #[arg(long, global = true)]
    n_per_dgp: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a simulated dataset and write it as JSON lines.
    Simulate {
        /// Comma-separated DGP names (default: the three baseline regimes).
        #[arg(long, value_delimiter = ',')]
        dgps: Option<Vec<String>>,
    },
    /// Run a reproduction experiment and write report plus plot data.
    Experiment {
        /// One of: exp1, exp2, exp3, exp4-window, exp4-sweep.
        id: String,
        /// Bootstrap resamples override.
        #[arg(long)]
        bootstrap: Option<usize>,
    },
    /// Compute the index for one shock on a CSV trade tape.
    Compute {
        /// Trade tape (CSV: ts_ms,price,size,side,wallet).
        #[arg(long)]
        trades: PathBuf,
        /// Shock time in epoch milliseconds.
        #[arg(long)]
        shock_ms: i64,
        /// Window length in minutes.
        #[arg(long)]
        window_min: Option<u32>,
        /// Bin length in minutes.
        #[arg(long)]
        bin_min: Option<u32>,
        /// Alarm threshold for the verdict.
        #[arg(long)]
        tau: Option<f64>,
        /// Wallet relationship graph for clustering.
        #[arg(long)]
        graph: Option<PathBuf>,
        /// Trade-level bootstrap resamples (0 disables).
        #[arg(long)]
        bootstrap: Option<usize>,
        /// Cobb-Douglas exponents "a,b,c" for the weighted variant.
        #[arg(long, value_delimiter = ',')]
        weights: Option<Vec<f64>>,
    },
    /// Replay a tape through the rolling monitor and alarm rule.
    Monitor {
        #[arg(long)]
        trades: PathBuf,
        /// Replay start in epoch milliseconds (default: first trade).
        #[arg(long)]
        start_ms: Option<i64>,
        /// Replay length in minutes (default: tape span, rounded down).
        #[arg(long)]
        duration_min: Option<u32>,
        /// Trailing window in minutes.
        #[arg(long)]
        window_min: Option<u32>,
        #[arg(long)]
        tau: Option<f64>,
    },
}

fn effective_manifest(common: &CommonArgs) -> Result<RunManifest, CliError> {
    let mut m = match &common.manifest {
        Some(path) => RunManifest::load(path)?,
        None => RunManifest::default(),
    };
    if let Some(seed) = common.seed {
        m.seed = seed;
    }
    if let Some(out) = &common.out {
        m.out_dir = out.display().to_string();
    }
    if let Some(n) = common.n_per_dgp {
        m.n_per_dgp = n;
    }
    Ok(m)
}

fn run() -> Result<(), CliError> {
    let cli = Cli::parse();
    let mut manifest = effective_manifest(&cli.common)?;
    match cli.command {
        Command::Simulate { dgps } => {
            if let Some(dgps) = dgps {
                manifest.simulate.dgps = dgps;
            }
            manifest.validate()?;
            commands::simulate(&manifest)
        }
        Command::Experiment { id, bootstrap } => {
            if let Some(b) = bootstrap {
                manifest.experiment.bootstrap = b;
            }
            manifest.validate()?;
            commands::experiment(&manifest, &id)
        }
        Command::Compute {
            trades,
            shock_ms,
            window_min,
            bin_min,
            tau,
            graph,
            bootstrap,
            weights,
        } => {
            if let Some(w) = window_min {
                manifest.compute.window_minutes = w;
            }
            if let Some(b) = bin_min {
                manifest.compute.bin_minutes = b;
            }
            if let Some(t) = tau {
                manifest.compute.tau = t;
            }
            if let Some(b) = bootstrap {
                manifest.compute.bootstrap = b;
            }
            if let Some(w) = weights {
                if w.len() != 3 {
                    return Err(CliError::Config(format!(
                        "weights: expected 3 exponents, got {}",
                        w.len()
                    )));
                }
                manifest.compute.weights = [w[0], w[1], w[2]];
            }
            manifest.validate()?;
            commands::compute(&manifest, &trades, shock_ms, graph.as_deref())
        }
        Command::Monitor { trades, start_ms, duration_min, window_min, tau } => {
            if let Some(w) = window_min {
                manifest.monitor.window_minutes = w;
            }
            if let Some(t) = tau {
                manifest.monitor.tau = t;
            }
            manifest.validate()?;
            commands::monitor(&manifest, &trades, start_ms, duration_min)
        }
    }
}

fn main() {
    if let Err(e) = run() {
        eprintln!("sci: {e}");
        std::process::exit(e.exit_code());
    }
}
