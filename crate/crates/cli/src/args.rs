use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use shared_kernel::P0Mode;

#[derive(Debug, Parser)]
#[command(
    name = "skscreen",
    version,
    about = "Shared-kernel Bayesian screening for two-group differences"
)]
pub struct Cli {
    /// Worker threads; defaults to the available parallelism. Outputs do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the kernel dictionary (stage one).
    FitDictionary(FitArgs),
    /// Screen every site against a fixed dictionary (stage two).
    Screen(ScreenArgs),
    /// Simulate a site-by-sample panel from a random dictionary.
    Simulate(SimulateArgs),
    /// Normalized Bayes factors over simulated sites.
    RateStudy(RateArgs),
    /// Distribution recovery of two-group, separate and common fits.
    RecoveryStudy(RecoveryArgs),
    /// Posterior of no difference for a pair of densities as N grows.
    ConsistencyStudy(ConsistencyArgs),
    /// Screening results under random relabelings of the groups.
    Permute(PermuteArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Retained sweeps after burn-in.
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub input: PathBuf,
    /// Fit this many kernels directly, skipping cross-validation.
    #[arg(long, conflicts_with_all = ["k_range", "folds"])]
    pub k: Option<usize>,
    /// Inclusive range of K scanned by cross-validation, as `lo:hi`.
    #[arg(long, value_parser = parse_k_range)]
    pub k_range: Option<(usize, usize)>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Number of sites used for fitting.
    #[arg(long, default_value_t = 500)]
    pub subsample: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ScreenArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub dictionary: PathBuf,
    /// `learned`, or `fixed=V` to hold P0 at V.
    #[arg(long, default_value = "learned", value_parser = parse_p0)]
    pub p0: P0Mode,
}

#[derive(Debug, Clone, Args)]
pub struct PermuteArgs {
    #[command(flatten)]
    pub screen: ScreenArgs,
    #[arg(long)]
    pub n_perm: usize,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub sites: usize,
    #[arg(long, default_value_t = 100)]
    pub subjects: usize,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Fraction of sites simulated without a group difference.
    #[arg(long, default_value_t = 0.8)]
    pub h0_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AllocationArg {
    Sampled,
    Known,
}

#[derive(Debug, Clone, Args)]
pub struct RateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 200)]
    pub replicates: usize,
    /// Run the sampler, or evaluate the closed form at the true memberships.
    #[arg(long, value_enum, default_value_t = AllocationArg::Sampled)]
    pub allocations: AllocationArg,
}

#[derive(Debug, Clone, Args)]
pub struct RecoveryArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 50)]
    pub replicates: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [1_000usize, 10_000])]
    pub n_values: Vec<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ConsistencyArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 10)]
    pub replicates: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [100usize, 1_000, 10_000])]
    pub n_grid: Vec<usize>,
    /// Group 0 density: `beta:A,B` or `tnorm:MU,SIGMA`.
    #[arg(long, default_value = "beta:2,5")]
    pub f0: String,
    #[arg(long, default_value = "beta:5,2")]
    pub f1: String,
    /// Fixed dictionary; defaults to five kernels at 0.1, 0.3, ..., 0.9 with scale 0.1.
    #[arg(long)]
    pub dictionary: Option<PathBuf>,
}

pub fn parse_p0(s: &str) -> Result<P0Mode, String> {
    if s == "learned" {
        return Ok(P0Mode::Learned);
    }
    let v = s
        .strip_prefix("fixed=")
        .ok_or_else(|| format!("expected 'learned' or 'fixed=V', got '{s}'"))?;
    let p: f64 = v.parse().map_err(|_| format!("'{v}' is not a number"))?;
    if !(0.0..=1.0).contains(&p) {
        return Err(format!("fixed P0 must lie in [0,1], got {p}"));
    }
    Ok(P0Mode::Fixed(p))
}

pub fn parse_k_range(s: &str) -> Result<(usize, usize), String> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| format!("expected lo:hi, got '{s}'"))?;
    let lo: usize = lo
        .trim()
        .parse()
        .map_err(|_| format!("'{lo}' is not a positive integer"))?;
    let hi: usize = hi
        .trim()
        .parse()
        .map_err(|_| format!("'{hi}' is not a positive integer"))?;
    if lo == 0 || hi < lo {
        return Err(format!("K range {lo}:{hi} must satisfy 1 <= lo <= hi"));
    }
    Ok((lo, hi))
}
