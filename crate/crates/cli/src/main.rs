//! `lipest` command-line tool.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 domain error
//! (unsupported norm pair, size guard, wrong input dimension, divergence),
//! 4 unreadable, unwritable or malformed data file.

mod bench;
mod commands;
mod settings;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand};
use lipest::{Algorithm, NormTag, SigmaMode};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "lipest",
    version,
    about = "Sampling estimates of local Lipschitz constants of ReLU networks"
)]
struct Cli {
    /// JSON file of option values (keys are flag names with underscores);
    /// a run manifest is accepted too. Flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the labelled-hypersphere regression dataset.
    GenData(GenDataArgs),
    /// Train a ReLU network on a dataset with Adam.
    Train(TrainArgs),
    /// Estimate the local Lipschitz constant by sampling.
    Estimate(EstimateArgs),
    /// Compute a reference value by grid search or breakpoint enumeration.
    Oracle(OracleArgs),
    /// Write the Jacobian norm on a 2-D lattice as CSV.
    Heatmap(HeatmapArgs),
    /// Run a benchmark suite and write one CSV row per run.
    Bench(BenchArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenData(_) => "gen-data",
            Command::Train(_) => "train",
            Command::Estimate(_) => "estimate",
            Command::Oracle(_) => "oracle",
            Command::Heatmap(_) => "heatmap",
            Command::Bench(_) => "bench",
        }
    }
}

#[derive(Debug, clap::Args, Serialize)]
struct GenDataArgs {
    /// Input dimension; taken from --domain when omitted.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
    /// Number of hyperspheres [default: 3].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    spheres: Option<usize>,
    /// Number of points [default: 800].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    points: Option<usize>,
    /// Domain file {"low": [...], "high": [...]} [default: [-1,1]^dim].
    #[arg(long, value_name = "FILE")]
    #[serde(skip_serializing_if = "Option::is_none")]
    domain: Option<PathBuf>,
    /// Random seed [default: 0].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    /// Standard deviation of the target noise [default: 0.1].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    noise: Option<f64>,
    /// Output dataset (JSON).
    #[arg(long, value_name = "FILE")]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
}

#[derive(Debug, clap::Args, Serialize)]
struct TrainArgs {
    /// Dataset file (JSON, or CSV with the target in the last column).
    #[arg(long, value_name = "FILE")]
    #[serde(skip_serializing_if = "Option::is_none")]
    data: Option<PathBuf>,
    /// Layer widths including input and output, e.g. 2,16,16,1.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    arch: Option<Vec<usize>>,
    /// Adam learning rate [default: 0.0005].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lr: Option<f64>,
    /// Number of epochs [default: 500].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    epochs: Option<usize>,
    /// Seed for initialization and shuffling [default: 0].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    /// Mini-batch size [default: full batch].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    batch: Option<usize>,
    /// Output model file (JSON).
    #[arg(long, value_name = "FILE")]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
}

#[derive(Debug, clap::Args, Serialize)]
struct EstimateArgs {
    /// Model file (JSON).
    #[arg(long, value_name = "FILE")]
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<PathBuf>,
    /// Domain file [default: [-1,1]^d].
    #[arg(long, value_name = "FILE")]
    #[serde(skip_serializing_if = "Option::is_none")]
    domain: Option<PathBuf>,
    /// uniform, partitioned or ucb [default: ucb].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    alg: Option<Algorithm>,
    /// Number of Jacobian evaluations [default: 60000].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    samples: Option<u64>,
    /// Input norm: 1, 2 or inf [default: inf].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<NormTag>,
    /// Output norm: 1, 2 or inf [default: inf].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    beta: Option<NormTag>,
    /// Divisions per dimension for the partitioned estimator [default: 2].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    /// UCB exploration constant [default: 10].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    c: Option<f64>,
    /// UCB subdivision time multiplier [default: 2].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    tm: Option<f64>,
    /// Samples per region before its score becomes finite [default: 10].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n0: Option<u64>,
    /// Random seed [default: 0].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    /// Spread term of the UCB score: stddev or variance [default: stddev].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma_mode: Option<SigmaMode>,
    /// Worker threads; results do not depend on it [default: 1].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    threads: Option<usize>,
    /// Output report (JSON).
    #[arg(long, value_name = "FILE")]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
enum OracleMode {
    Grid,
    Breakpoints,
}

#[derive(Debug, clap::Args, Serialize)]
struct OracleArgs {
    /// Model file (JSON).
    #[arg(long, value_name = "FILE")]
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<PathBuf>,
    /// grid (any dimension) or breakpoints (scalar input, exact) [default: grid].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    mode: Option<OracleMode>,
    /// Lattice points per dimension [default: 400].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    grid: Option<usize>,
    /// Also evaluate every lattice cell center.
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    jitter: bool,
    /// Input norm: 1, 2 or inf [default: inf].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<NormTag>,
    /// Output norm: 1, 2 or inf [default: inf].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    beta: Option<NormTag>,
    /// Domain file [default: [-1,1]^d].
    #[arg(long, value_name = "FILE")]
    #[serde(skip_serializing_if = "Option::is_none")]
    domain: Option<PathBuf>,
    /// Worker threads [default: 1].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    threads: Option<usize>,
    /// Output report (JSON).
    #[arg(long, value_name = "FILE")]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
}

#[derive(Debug, clap::Args, Serialize)]
struct HeatmapArgs {
    /// Model file (JSON) with two inputs.
    #[arg(long, value_name = "FILE")]
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<PathBuf>,
    /// Lattice points per dimension [default: 400].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    grid: Option<usize>,
    /// Input norm: 1, 2 or inf [default: inf].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<NormTag>,
    /// Output norm: 1, 2 or inf [default: inf].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    beta: Option<NormTag>,
    /// Domain file [default: [-1,1]^2].
    #[arg(long, value_name = "FILE")]
    #[serde(skip_serializing_if = "Option::is_none")]
    domain: Option<PathBuf>,
    /// Worker threads [default: 1].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    threads: Option<usize>,
    /// Output CSV with header x0,x1,norm.
    #[arg(long, value_name = "FILE")]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
}

#[derive(Debug, clap::Args, Serialize)]
struct BenchArgs {
    /// Suite file (JSON); see the README for its schema.
    #[arg(long, value_name = "FILE")]
    #[serde(skip_serializing_if = "Option::is_none")]
    suite: Option<PathBuf>,
    /// Worker threads [default: 1].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    threads: Option<usize>,
    /// Output CSV.
    #[arg(long, value_name = "FILE")]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
}

/// A failed command: exit code plus message.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    message: String,
    show_usage: bool,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
            show_usage: false,
        }
    }

    pub fn missing(flag: &str) -> Self {
        Failure {
            code: 2,
            message: format!("the following required argument was not provided: --{flag}"),
            show_usage: true,
        }
    }

    pub fn domain(message: impl Into<String>) -> Self {
        Failure {
            code: 3,
            message: message.into(),
            show_usage: false,
        }
    }

    /// A data file that could not be read or understood.
    pub fn input(e: lipest::Error) -> Self {
        let code = match e {
            lipest::Error::Io { .. }
            | lipest::Error::Parse { .. }
            | lipest::Error::InvalidModel(_)
            | lipest::Error::InvalidBox(_)
            | lipest::Error::InvalidConfig(_) => 4,
            _ => return e.into(),
        };
        Failure {
            code,
            message: e.to_string(),
            show_usage: false,
        }
    }
}

impl From<lipest::Error> for Failure {
    fn from(e: lipest::Error) -> Self {
        use lipest::Error as E;
        let code = match e {
            E::InvalidConfig(_) => 2,
            E::Io { .. } | E::Parse { .. } => 4,
            _ => 3,
        };
        Failure {
            code,
            message: e.to_string(),
            show_usage: false,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.command.name();
    let config = cli.config.as_deref();
    let result = match &cli.command {
        Command::GenData(a) => commands::gen_data(a, config),
        Command::Train(a) => commands::train(a, config),
        Command::Estimate(a) => commands::estimate(a, config),
        Command::Oracle(a) => commands::oracle(a, config),
        Command::Heatmap(a) => commands::heatmap(a, config),
        Command::Bench(a) => bench::run(a, config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            if failure.show_usage {
                let mut cmd = Cli::command();
                cmd.build();
                if let Some(sub) = cmd.find_subcommand_mut(name) {
                    eprintln!(
                        "\n{}\n\nFor more information, try '--help'.",
                        sub.render_usage()
                    );
                }
            }
            ExitCode::from(failure.code)
        }
    }
}
