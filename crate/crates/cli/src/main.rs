//! `secretary`: evaluate, optimize, simulate and sweep cutoff policies.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use secretary_core::montecarlo::Variant;
use secretary_core::sweep::Objective;
use secretary_core::{SumStrategy, UtilityFunction};

use crate::report::Format;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;
pub const EXIT_CAPACITY: u8 = 4;

/// Environment switch for the Monte Carlo permutation self-checks.
pub const DEBUG_ENV: &str = "SECRETARY_DEBUG_CHECKS";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(secretary_core::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use secretary_core::Error as E;
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(E::Domain(_) | E::Parse { .. }) => EXIT_USAGE,
            CliError::Core(E::Capacity(_)) => EXIT_CAPACITY,
            CliError::Core(E::Quadrature { .. } | E::Numeric(_) | E::Invariant(_)) => EXIT_NUMERIC,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage error: {msg}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<secretary_core::Error> for CliError {
    fn from(e: secretary_core::Error) -> Self {
        CliError::Core(e)
    }
}

#[derive(Debug, Parser)]
#[command(name = "secretary", version, about = "Cutoff policies for the generalized secretary problem")]
pub struct Cli {
    /// Output format [default: text]
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,

    /// key=value file supplying defaults for unset flags
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct QuadArgs {
    /// Absolute tolerance of each integral [default: 1e-10]
    #[arg(long)]
    pub abs_tol: Option<f64>,
    /// Maximum bisection depth [default: 40]
    #[arg(long)]
    pub max_depth: Option<u32>,
    /// per-term or swapped-kernel [default: swapped-kernel]
    #[arg(long)]
    pub strategy: Option<SumStrategy>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cutoffs {
    Single(usize),
    Range(usize, usize),
}

impl Cutoffs {
    pub fn values(self) -> Vec<usize> {
        match self {
            Cutoffs::Single(c) => vec![c],
            Cutoffs::Range(a, b) => (a..=b).collect(),
        }
    }
}

impl std::fmt::Display for Cutoffs {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Cutoffs::Single(c) => write!(f, "{c}"),
            Cutoffs::Range(a, b) => write!(f, "{a}..{b}"),
        }
    }
}

impl std::str::FromStr for Cutoffs {
    type Err = String;

    /// `c` or an inclusive range `a..b`.
    fn from_str(s: &str) -> Result<Self, String> {
        let int = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("invalid cutoff `{t}`"));
        match s.split_once("..") {
            Some((a, b)) => {
                let (a, b) = (int(a)?, int(b)?);
                if a > b {
                    return Err(format!("empty cutoff range `{s}`"));
                }
                Ok(Cutoffs::Range(a, b))
            }
            None => Ok(Cutoffs::Single(int(s)?)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Method {
    Binary,
    Scan,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Binary => "binary",
            Method::Scan => "scan",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        <Method as clap::ValueEnum>::from_str(s, false)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Expected utility and its differences for one cutoff or a range a..b
    Eval {
        /// Utility spec, e.g. linear, power:2, nsqrt, step:0.3, pwl:0,0;1,-1
        #[arg(long = "w")]
        w: UtilityFunction,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        c: Cutoffs,
        #[command(flatten)]
        quad: QuadArgs,
    },
    /// Optimal cutoff for a utility
    Opt {
        #[arg(long = "w")]
        w: UtilityFunction,
        #[arg(long)]
        n: usize,
        /// binary or scan [default: binary]
        #[arg(long, value_enum)]
        method: Option<Method>,
        #[command(flatten)]
        quad: QuadArgs,
    },
    /// Optimal cutoff for the top-k objective
    Topk {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        /// Also enumerate all permutations (n <= 12)
        #[arg(long)]
        enumerate: bool,
    },
    /// Monte Carlo estimate of a cutoff policy
    Sim {
        #[arg(long, value_parser = parse_variant)]
        variant: Variant,
        #[arg(long = "w")]
        w: Option<UtilityFunction>,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        c: usize,
        #[arg(long)]
        k: Option<usize>,
        /// [default: 100000]
        #[arg(long)]
        trials: Option<u64>,
        /// [default: 0]
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Optimal cutoffs over a grid of n with a power-law fit
    Sweep {
        /// utility:<w-spec> or topk:<k>
        #[arg(long)]
        objective: Objective,
        /// Comma-separated increasing n values [default: per objective]
        #[arg(long)]
        grid: Option<String>,
        /// Write the CSV here, with a manifest at <FILE>.manifest.json
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// JSON cache of computed grid points
        #[arg(long, value_name = "FILE")]
        cache: Option<PathBuf>,
        /// Leave the smallest n out of the fit
        #[arg(long)]
        drop_smallest: bool,
        /// Bound check passes when c_opt <= slack * bound [default: 2]
        #[arg(long)]
        slack: Option<f64>,
        #[command(flatten)]
        quad: QuadArgs,
    },
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse::<Variant>().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("secretary: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
