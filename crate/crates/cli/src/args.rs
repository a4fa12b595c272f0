use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use equiterm::equilibrium::Method;

#[derive(Debug, Parser)]
#[command(name = "equiterm", version, about = "Equilibrium term structure of electricity forward prices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a scenario against the model's preconditions.
    Validate(Common),
    /// Compute the equilibrium prices and the saturation status.
    Solve(SolveArgs),
    /// Solve, then check monotonicity and the uniqueness conditions.
    Diagnose(DiagnoseArgs),
    /// Compare the two-stage closed form with the solver.
    TwoStage(SolveArgs),
    /// Equilibrium of the expected-profit (linear) market.
    MeanMax(Common),
    /// Grid-search equilibrium for markets with at most three prices.
    Oracle(OracleArgs),
    /// Doob decomposition of the scenario's price ensemble.
    Doob(DoobArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Validate(_) => "validate",
            Command::Solve(_) => "solve",
            Command::Diagnose(_) => "diagnose",
            Command::TwoStage(_) => "two-stage",
            Command::MeanMax(_) => "mean-max",
            Command::Oracle(_) => "oracle",
            Command::Doob(_) => "doob",
        }
    }

    pub fn common(&self) -> &Common {
        match self {
            Command::Validate(c) | Command::MeanMax(c) => c,
            Command::Solve(a) | Command::TwoStage(a) => &a.common,
            Command::Diagnose(a) => &a.solve.common,
            Command::Oracle(a) => &a.solve.common,
            Command::Doob(a) => &a.solve.common,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Tatonnement,
    Newton,
    Hybrid,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Tatonnement => Method::Tatonnement,
            MethodArg::Newton => Method::Newton,
            MethodArg::Hybrid => Method::Hybrid,
        }
    }
}

fn positive(s: &str) -> Result<f64, String> {
    let x: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(format!("expected a positive number, got {s}"))
    }
}

#[derive(Debug, Args)]
pub struct Common {
    /// Scenario file (JSON).
    #[arg(long)]
    pub scenario: PathBuf,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: Common,
    /// Clearing tolerance on the largest excess volume.
    #[arg(long, default_value_t = 1e-8, value_parser = positive)]
    pub tol: f64,
    /// Largest accepted KKT residual of any best response.
    #[arg(long, default_value_t = 1e-8, value_parser = positive)]
    pub kkt_tol: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    #[arg(long, value_enum, default_value_t = MethodArg::Hybrid)]
    pub method: MethodArg,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub solve: SolveArgs,
    /// Seed of the monotonicity sampler.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of sampled price pairs.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    /// Relative sampling radius around the equilibrium.
    #[arg(long, default_value_t = 0.05, value_parser = positive)]
    pub radius: f64,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub solve: SolveArgs,
    /// Spacing of the final price lattice.
    #[arg(long, default_value_t = 1e-4, value_parser = positive)]
    pub step: f64,
}

#[derive(Debug, Args)]
pub struct DoobArgs {
    #[command(flatten)]
    pub solve: SolveArgs,
    /// Ensemble file; defaults to the ensemble inside the scenario.
    #[arg(long)]
    pub ensemble: Option<PathBuf>,
    /// Put the first price into the drift (`M(t0) = 0`).
    #[arg(long)]
    pub normalize: bool,
    /// Also shift the drift to the equilibrium prices and check that the
    /// covariance and the equilibrium are unchanged.
    #[arg(long)]
    pub equilibrium: bool,
}
