use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "parrondo",
    version,
    about = "Exact and simulated analysis of Parrondo games on a ring"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON config file, or a manifest from an earlier run. Flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output format (default: json for ergodicity, csv otherwise).
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Write results here and the manifest to `<out>.manifest.json`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; 1 runs everything serially.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchedKind {
    Mixture,
    Periodic,
    PureB,
    PureAprime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GameKind {
    Aprime,
    B,
    Mixture,
    Periodic,
}

/// Model parameters shared by most subcommands.
#[derive(Debug, Clone, Default, Args)]
pub struct Model {
    /// Coins as `p0,p1,p2,p3`.
    #[arg(long)]
    pub p: Option<String>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub r: Option<usize>,
    #[arg(long)]
    pub s: Option<usize>,
    /// Explicit schedule; otherwise `--r/--s` select periodic and `--gamma` the mixture.
    #[arg(long, value_enum)]
    pub scheduler: Option<SchedKind>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact equilibrium mean profit per turn.
    ExactMean {
        /// Ring size, or a list/range such as `6..10` or `5,7`.
        #[arg(long)]
        n: Option<String>,
        #[command(flatten)]
        model: Model,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_iters: Option<usize>,
    },
    /// Sufficient ergodicity condition for the mixture and for game B.
    Ergodicity {
        #[command(flatten)]
        model: Model,
    },
    /// Volume of the parameter region where ergodicity is guaranteed.
    Volume {
        #[arg(long)]
        gamma: Option<f64>,
        /// Sample count; scientific notation such as `1e6` is accepted.
        #[arg(long)]
        samples: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Restrict to `p1 = p2`.
        #[arg(long)]
        equal_middle: bool,
    },
    /// Path simulation of the N-player chain.
    Simulate {
        #[arg(long)]
        n: Option<String>,
        #[command(flatten)]
        model: Model,
        #[arg(long)]
        turns: Option<String>,
        #[arg(long)]
        burnin: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        replicas: Option<u64>,
        /// Fail if any turn breaks wealth conservation.
        #[arg(long)]
        check_conservation: bool,
    },
    /// Search a parameter grid for B losing or fair while the mixture wins.
    Scan {
        #[arg(long)]
        n: Option<String>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        turns: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Axis values as a list, e.g. `0.1,0.5,0.9`.
        #[arg(long)]
        axis: Option<String>,
        /// Evenly spaced axis with this many points on [0, 1].
        #[arg(long)]
        points: Option<usize>,
        #[arg(long)]
        equal_middle: bool,
    },
    /// Exact mean profit over a range of ring sizes with successive differences.
    Convergence {
        #[arg(long)]
        n: Option<String>,
        #[command(flatten)]
        model: Model,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_iters: Option<usize>,
    },
    /// Compare discrete generators on embedded cylinder functions with their limits.
    GeneratorCheck {
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        n: Option<String>,
        #[arg(long, value_enum)]
        game: Option<GameKind>,
        #[command(flatten)]
        model: Model,
        /// Random test functions per ring size.
        #[arg(long)]
        draws: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::ExactMean { .. } => "exact-mean",
            Self::Ergodicity { .. } => "ergodicity",
            Self::Volume { .. } => "volume",
            Self::Simulate { .. } => "simulate",
            Self::Scan { .. } => "scan",
            Self::Convergence { .. } => "convergence",
            Self::GeneratorCheck { .. } => "generator-check",
        }
    }
}
