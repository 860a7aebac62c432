//! Command-line grammar.

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(
    name = "amoments",
    version,
    about = "Experiments on 4-ranks, 2-Selmer groups and character-sum moments"
)]
pub struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, env = "AMOMENTS_THREADS")]
    pub threads: Option<usize>,
    /// CSV destination (default: stdout).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Checkpoint file for chunked sweeps; resumed when present.
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
    /// Seed for randomized checks.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Override the default chunk width of chunked sweeps.
    #[arg(long, global = true)]
    pub chunk_size: Option<u64>,
    #[arg(long, global = true, hide = true)]
    pub halt_after: Option<usize>,
    /// Log one line per completed chunk to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SignArg {
    Neg,
    Pos,
}

impl SignArg {
    pub fn sign(self) -> amoments::arith::Sign {
        match self {
            SignArg::Neg => amoments::arith::Sign::Negative,
            SignArg::Pos => amoments::arith::Sign::Positive,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SettingArg {
    Class,
    Selmer,
}

impl SettingArg {
    pub fn setting(self) -> amoments::moments::Setting {
        match self {
            SettingArg::Class => amoments::moments::Setting::Class,
            SettingArg::Selmer => amoments::moments::Setting::Selmer,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compare matrix-side quantities with independent oracles.
    #[command(subcommand)]
    Verify(VerifyCommand),
    /// Exact moment identities.
    #[command(subcommand)]
    Identity(IdentityCommand),
    /// Moment sweeps.
    #[command(subcommand)]
    Moment(MomentCommand),
    /// Largest unlinked index sets.
    Unlinked(UnlinkedArgs),
    /// Bilinear Jacobi-symbol sums.
    Charsum(CharsumArgs),
    /// Local densities and the h₃ level sum.
    Density(DensityArgs),
    /// Class groups of quadratic discriminants.
    Classgroup(ClassgroupArgs),
}

#[derive(Debug, Subcommand)]
pub enum VerifyCommand {
    /// Rédei 4-rank against the form-class-group oracle.
    Redei {
        #[arg(long)]
        dmax: u64,
        #[arg(long, value_enum, default_value = "neg")]
        sign: SignArg,
    },
    /// Selmer matrix against local conditions, or against full descent.
    Selmer {
        #[arg(long, value_parser = parse_curve, allow_hyphen_values = true, default_value = "0,1,-1")]
        curve: [i64; 3],
        #[arg(long, value_enum, default_value = "matrix")]
        check: SelmerCheck,
        #[arg(long, default_value_t = 2000)]
        bound: u64,
    },
    /// Majorization inequalities on random coprime square-free pairs.
    Majorization {
        #[arg(long, value_enum, default_value = "class")]
        setting: SettingArg,
        #[arg(long, default_value_t = 1000)]
        pairs: u64,
        #[arg(long, default_value_t = 1)]
        k: u32,
        #[arg(long, default_value_t = 10_000)]
        bound: i64,
        #[arg(long, value_parser = parse_curve, allow_hyphen_values = true, default_value = "0,1,-1")]
        curve: [i64; 3],
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SelmerCheck {
    Matrix,
    Descent,
}

#[derive(Debug, Subcommand)]
pub enum IdentityCommand {
    /// First-moment identity at every X up to the bound.
    FirstMoment {
        #[arg(long)]
        x: u64,
        #[arg(long, default_value = "one")]
        weight: String,
    },
    /// k-th moment against its character-sum expansion at every X up to
    /// the bound.
    KMoment {
        #[arg(long, value_enum, default_value = "class")]
        setting: SettingArg,
        #[arg(long)]
        x: u64,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value = "one")]
        weight: String,
        #[arg(long, value_parser = parse_curve, allow_hyphen_values = true, default_value = "0,1,-1")]
        curve: [i64; 3],
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClassExperiment {
    /// Σ h_{3·2^k} and its majorant.
    Torsion,
    /// Weighted moment of the twisted Rédei kernel.
    Weighted,
}

#[derive(Debug, Subcommand)]
pub enum MomentCommand {
    Class {
        /// Comma-separated list of X.
        #[arg(long, value_delimiter = ',', required = true)]
        x: Vec<u64>,
        #[arg(long, default_value_t = 1)]
        k: u32,
        #[arg(long, value_enum, default_value = "neg")]
        sign: SignArg,
        #[arg(long, value_enum, default_value = "torsion")]
        experiment: ClassExperiment,
        #[arg(long, default_value = "2^omega")]
        weight: String,
    },
    Selmer {
        #[arg(long, value_parser = parse_curve, allow_hyphen_values = true, default_value = "0,1,-1")]
        curve: [i64; 3],
        #[arg(long, default_value = "t", allow_hyphen_values = true)]
        poly: String,
        /// Comma-separated list of box sizes B.
        #[arg(long, value_delimiter = ',', required = true)]
        b: Vec<u64>,
        #[arg(long, default_value_t = 1)]
        k: u32,
    },
}

#[derive(Debug, Args)]
pub struct UnlinkedArgs {
    #[arg(long, value_enum)]
    pub setting: SettingArg,
    #[arg(long)]
    pub k: usize,
    /// Also write the witness set here.
    #[arg(long)]
    pub witness_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CharsumArgs {
    #[arg(long)]
    pub x: u64,
    #[arg(long, value_delimiter = ',', default_value = "10,100,1000")]
    pub z: Vec<u64>,
    #[arg(long, default_value = "mu2")]
    pub scheme: String,
    /// Power of log X in the normalization.
    #[arg(long, default_value_t = 3)]
    pub log_power: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DensityQuantity {
    /// Local density constants and box counts of a polynomial.
    Level,
    /// Average root count modulo primes.
    Frobenian,
    /// Σ (h₃ − 1) against its predicted main term.
    H3,
}

#[derive(Debug, Args)]
pub struct DensityArgs {
    #[arg(long, value_enum)]
    pub quantity: DensityQuantity,
    #[arg(long, default_value = "t", allow_hyphen_values = true)]
    pub poly: String,
    #[arg(long, default_value_t = 100)]
    pub pmax: u64,
    #[arg(long, default_value_t = 1000)]
    pub b: i64,
    #[arg(long, default_value_t = 100_000)]
    pub x: u64,
    #[arg(long, default_value_t = 1)]
    pub m: u64,
    #[arg(long, value_enum, default_value = "neg")]
    pub sign: SignArg,
}

#[derive(Debug, Args)]
pub struct ClassgroupArgs {
    /// A single discriminant.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "dmax")]
    pub d: Option<i64>,
    /// All fundamental discriminants with |Δ| ≤ dmax of the given sign.
    #[arg(long)]
    pub dmax: Option<u64>,
    #[arg(long, value_enum, default_value = "neg")]
    pub sign: SignArg,
    #[arg(long)]
    pub narrow: bool,
    /// Also write a tab-separated cache file.
    #[arg(long)]
    pub cache: Option<PathBuf>,
}

/// Parses `r1,r2,r3`.
pub fn parse_curve(s: &str) -> Result<[i64; 3], String> {
    let parts: Vec<i64> = s
        .split(',')
        .map(|p| p.trim().parse::<i64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    parts
        .try_into()
        .map_err(|v: Vec<i64>| format!("expected three roots, got {}", v.len()))
}
