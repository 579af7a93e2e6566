use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use extremal_tree::Error;

mod commands;

/// Learn and simulate tree-structured models for multivariate extremes.
#[derive(Parser, Debug)]
#[command(name = "extremal-tree", version)]
struct Cli {
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct InputArgs {
    /// CSV file, one row per observation.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = ',')]
    delimiter: char,
    /// The first row holds data, not column names.
    #[arg(long)]
    no_header: bool,
    /// Take absolute values of all entries.
    #[arg(long)]
    abs: bool,
}

#[derive(Args, Debug, Clone)]
struct KArgs {
    /// Number of upper order statistics.
    #[arg(long, conflicts_with = "q")]
    k: Option<usize>,
    /// Tail fraction; k = round(q·n).
    #[arg(long)]
    q: Option<f64>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum SimKind {
    /// Max-stable vector with unit Fréchet margins.
    MaxStable,
    /// Pareto vector conditioned on coordinate --root being large.
    Rooted,
    /// Max-stable plus independent noise (domain of attraction).
    Noisy,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate from a model JSON and write CSV.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum, default_value_t = SimKind::MaxStable)]
        kind: SimKind,
        #[arg(long, default_value_t = 0)]
        root: usize,
    },
    /// Empirical extremal variogram.
    Estimate {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        k: KArgs,
        /// Node index or "combined".
        #[arg(long, default_value = "combined")]
        root: String,
    },
    /// Learn the tree structure.
    Learn {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        k: KArgs,
        /// chi | gamma | gamma-root=M | gamma-weighted=FILE
        #[arg(long, default_value = "gamma")]
        method: String,
    },
    /// Empirical extremal correlation over a grid of levels (CSV).
    ChiCurve {
        #[command(flatten)]
        input: InputArgs,
        /// Pairs such as 0-1,2-3; all pairs when absent.
        #[arg(long, value_delimiter = ',')]
        pairs: Vec<String>,
        /// Quantile levels 1 − k/n.
        #[arg(long, value_delimiter = ',')]
        levels: Vec<f64>,
    },
    /// Fit a Hüsler–Reiss tree.
    FitHr {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        k: KArgs,
    },
    /// Edge frequencies over bootstrap refits.
    Bootstrap {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        k: KArgs,
        #[arg(long, default_value = "gamma")]
        method: String,
        #[arg(long = "replicates", short = 'B', default_value_t = 100)]
        replicates: usize,
    },
    /// Simulation study from a JSON config (CSV).
    Experiment {
        #[arg(long)]
        config: PathBuf,
    },
    /// Full analysis report (JSON).
    Pipeline {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, default_value_t = 0.05)]
        q: f64,
        /// Bootstrap replicates; 0 skips the bootstrap.
        #[arg(long = "replicates", short = 'B', default_value_t = 100)]
        replicates: usize,
        /// Skip the Hüsler–Reiss fit and the implied-χ table.
        #[arg(long)]
        no_fit: bool,
        #[arg(long, value_delimiter = ',')]
        pairs: Vec<String>,
    },
}

fn exit_code(e: &Error) -> u8 {
    if e.is_input_error() {
        2
    } else {
        3
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
