mod commands;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use netmix::em::EStepVariant;

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "netmix", version, about = "Model-based clustering of populations of networks")]
pub struct Cli {
    /// Worker threads; defaults to every core.
    #[arg(long, global = true, env = "NETMIX_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InputFormat {
    /// `population.json` files and directories holding one are dense JSON,
    /// other directories edge-list CSV.
    Auto,
    DenseJson,
    EdgeList,
}

#[derive(Debug, Args)]
pub struct Input {
    /// Population file or directory.
    pub input: PathBuf,

    #[arg(long, value_enum, default_value = "auto")]
    pub format: InputFormat,
}

#[derive(Debug, Args)]
pub struct EmArgs {
    /// Number of EM starts (three distance-based, the rest perturbed).
    #[arg(long, default_value_t = 10)]
    pub starts: usize,

    /// E-step: `paper` keeps equal weights, `standard` uses the estimated
    /// mixing proportions.
    #[arg(long, default_value = "paper")]
    pub variant: EStepVariant,

    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    /// Relative change of the objective that stops EM.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,

    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ExecutiveBlock {
    /// Dyads of vertices outside every department carry no block effects.
    Drop,
    /// Such vertices form a block of their own.
    Singleton,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a mixture with a fixed number of components.
    Fit {
        #[command(flatten)]
        input: Input,
        /// Family name (`p1`, `unconstrained`), JSON spec, or `@file.json`.
        #[arg(long)]
        model: String,
        #[arg(long = "M")]
        m: usize,
        #[command(flatten)]
        em: EmArgs,
        #[arg(short, long, default_value = "netmix-out")]
        output: PathBuf,
    },
    /// Fit a range of component counts and tabulate AIC and BIC.
    Select {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        model: String,
        /// Range such as `1..4` (inclusive).
        #[arg(long = "M-range", default_value = "1..4")]
        m_range: String,
        #[command(flatten)]
        em: EmArgs,
        #[arg(short, long, default_value = "netmix-out")]
        output: PathBuf,
    },
    /// Pairwise graph distances, and PAM partitions when `--M` is given.
    Distances {
        #[command(flatten)]
        input: Input,
        #[arg(long = "M")]
        m: Option<usize>,
        #[arg(short, long, default_value = "netmix-out")]
        output: PathBuf,
    },
    /// Run a simulation scenario (`A` to `L`).
    Sim {
        #[arg(long)]
        scenario: String,
        /// Use the full-scale grid and replicate count.
        #[arg(long)]
        full: bool,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        starts: Option<usize>,
        #[arg(short, long, default_value = "netmix-out")]
        output: PathBuf,
    },
    /// Screen with the unconstrained mixture, then refit the covariate
    /// mixed model on a cognitive social structure.
    Application {
        #[arg(default_value = "data/krackhardt")]
        input: PathBuf,
        #[arg(long = "M-range", default_value = "1..4")]
        m_range: String,
        #[arg(long, value_enum, default_value = "drop")]
        unassigned: ExecutiveBlock,
        #[command(flatten)]
        em: EmArgs,
        #[arg(short, long, default_value = "netmix-out")]
        output: PathBuf,
    },
    /// Convert stacked adjacency matrices plus a vertex attribute table
    /// into a dense JSON population.
    Import {
        /// Whitespace separated `v × v` matrices, one after another.
        #[arg(long)]
        matrices: PathBuf,
        /// CSV with one row per vertex; numeric columns become vertex
        /// covariates and a `label` column names the vertices.
        #[arg(long)]
        attributes: Option<PathBuf>,
        #[arg(long)]
        undirected: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Recompute the digests recorded in a manifest.
    Verify { manifest: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("error")).init();
    let args: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { CliError::USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(CliError::USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(CliError::NUMERICAL);
        }
    }
    match commands::run(cli.command, &args[1..]) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
