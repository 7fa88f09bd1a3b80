//! Command parameters. Each set is both a clap argument group and the
//! serialized run configuration echoed in the result envelope.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use hamcycle::LatticeShape;
use serde::{Deserialize, Serialize};

pub const DEFAULT_SEED: u64 = 0x5eed;

#[derive(Debug, Clone, Serialize, Deserialize, clap::Subcommand)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum RunConfig {
    /// Count Hamiltonian cycles exactly.
    Count(CountArgs),
    /// Ground-state search for the parent Hamiltonian; writes a checkpoint.
    Dmrg(DmrgArgs),
    /// Quality metrics of a stored MPS.
    Report(ReportArgs),
    /// Smallest bond dimension reaching a target count error, with timings.
    Bench(BenchArgs),
    /// Boltzmann reweighting of the cycle state by a bend energy.
    Boltzmann(BoltzmannArgs),
    /// Dress every cycle with a monomer sequence.
    Dress(DressArgs),
    /// Amplitude amplification on the statevector.
    Amplify(AmplifyArgs),
}

impl RunConfig {
    pub fn name(&self) -> &'static str {
        match self {
            RunConfig::Count(_) => "count",
            RunConfig::Dmrg(_) => "dmrg",
            RunConfig::Report(_) => "report",
            RunConfig::Bench(_) => "bench",
            RunConfig::Boltzmann(_) => "boltzmann",
            RunConfig::Dress(_) => "dress",
            RunConfig::Amplify(_) => "amplify",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum MethodArg {
    Brute,
    Transfer,
    Both,
}

#[derive(Debug, Clone, Serialize, Deserialize, Args)]
pub struct CountArgs {
    #[arg(long)]
    pub shape: LatticeShape,
    #[arg(long, value_enum, default_value = "transfer")]
    pub method: MethodArg,
    /// Append a row per method to this CSV table.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Args)]
pub struct DmrgArgs {
    #[arg(long)]
    pub shape: LatticeShape,
    /// Final bond dimension; earlier sweeps ramp up by doubling from 16.
    #[arg(long, default_value_t = 64)]
    pub chi: usize,
    /// Explicit per-sweep bond dimensions, overriding the ramp.
    #[arg(long, value_delimiter = ',')]
    pub chi_schedule: Option<Vec<usize>>,
    #[arg(long, default_value_t = 20)]
    pub sweeps: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub energy_tol: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Samples for the quality report.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    /// Checkpoint path; defaults to `hamcycle-<shape>-chi<chi>.mps.json`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Also write the quality/entropy CSV here.
    #[arg(long)]
    pub quality_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Entropy profile CSV output.
    #[arg(long)]
    pub entropy_csv: Option<PathBuf>,
    /// Skip the exact transfer-matrix count.
    #[arg(long)]
    pub no_exact: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub shapes: Vec<LatticeShape>,
    #[arg(long, value_delimiter = ',', default_value = "32,64,128")]
    pub chis: Vec<usize>,
    #[arg(long, default_value_t = 0.005)]
    pub target_eps: f64,
    #[arg(long, default_value_t = 20)]
    pub sweeps: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CountSourceArg {
    /// Transfer matrix (or exhaustive scan beyond its width cap).
    Exact,
    /// `2^N <+|psi>^2` of the input state.
    Mps,
}

#[derive(Debug, Clone, Serialize, Deserialize, Args)]
pub struct BoltzmannArgs {
    #[arg(long)]
    pub shape: LatticeShape,
    #[arg(long, value_delimiter = ',', default_value = "0,0.5,1")]
    pub beta: Vec<f64>,
    /// Energy per bend.
    #[arg(long, default_value_t = 1.0)]
    pub epsilon: f64,
    /// Start from this MPS instead of the exact cycle state.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "exact")]
    pub count: CountSourceArg,
    #[arg(long, default_value_t = 512)]
    pub chi_max: usize,
    #[arg(long, default_value_t = 1e-12)]
    pub cutoff: f64,
    /// Compare with the exhaustive Boltzmann sum.
    #[arg(long)]
    pub check: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, Args)]
pub struct DressArgs {
    #[arg(long)]
    pub shape: LatticeShape,
    #[arg(long)]
    pub seq: String,
    /// Heteropolymer partition function at these temperatures (HP contacts).
    #[arg(long, value_delimiter = ',', default_value = "0,1")]
    pub beta: Vec<f64>,
    /// Per-term CSV output.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Args)]
pub struct AmplifyArgs {
    /// One shape, or several for the exponent fit.
    #[arg(long, value_delimiter = ',', required = true)]
    pub shape: Vec<LatticeShape>,
    #[arg(long, default_value_t = 20)]
    pub max_iter: usize,
}
