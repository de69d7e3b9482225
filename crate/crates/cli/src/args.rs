use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use prtest_core::simulation::SimVariant;

#[derive(Debug, Parser)]
#[command(name = "prtest", version, about = "Empirical-null local fdr testing with predictive recursion")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the model to a file of z-scores and flag non-null cases.
    Fit(FitArgs),
    /// Run a seeded simulation study over variants and null proportions.
    Simulate(SimulateArgs),
    /// Compare the analytic likelihood gradient with finite differences.
    Gradcheck(GradcheckArgs),
}

/// Settings shared by everything that fits the model.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Local fdr threshold r; cases with fdr < r are flagged.
    #[arg(long, default_value_t = 0.1)]
    pub threshold: f64,
    /// Number of frozen data orderings the likelihood is averaged over.
    #[arg(long, default_value_t = 10)]
    pub permutations: usize,
    /// Quadrature nodes for the non-null mixing density.
    #[arg(long, default_value_t = 200)]
    pub grid: usize,
    /// Weight decay exponent, in (2/3, 1].
    #[arg(long, default_value_t = 0.67)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Prior sd of log sigma.
    #[arg(long, default_value_t = 0.25)]
    pub prior_sd_log_sigma: f64,
    /// First Beta shape of the prior on the null proportion.
    #[arg(long, default_value_t = 22.7)]
    pub prior_beta_a: f64,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// z-scores, one per line.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = ".")]
    pub output_dir: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Also write curves.tsv with the fitted densities on a grid.
    #[arg(long)]
    pub emit_curves: bool,
    /// Curve range; defaults to the data range padded by 1.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
    pub curve_range: Option<Vec<f64>>,
    #[arg(long, default_value_t = 401)]
    pub curve_points: usize,
    /// Record wall-clock runtime in estimates.json (makes output non-reproducible).
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value = ".")]
    pub output_dir: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "C1,C2,C3,C4")]
    pub variants: Vec<SimVariant>,
    #[arg(long, value_delimiter = ',', default_value = "0.75,0.8,0.85,0.9,0.95,0.99")]
    pub pis: Vec<f64>,
    #[arg(long, default_value_t = 50)]
    pub reps: usize,
    /// Cases per replicate.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 1e-5)]
    pub fd_step: f64,
    /// Maximum accepted relative error per component.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 10)]
    pub seeds: usize,
    #[arg(long, default_value_t = 20_100_517)]
    pub seed: u64,
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}
