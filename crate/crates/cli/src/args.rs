use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Weak-convergence experiments for SDEs with fixed-direction noise.
///
/// Every run is fully determined by its flags and seed: rerunning the
/// same command produces a byte-identical CSV, whatever `--workers` is.
#[derive(Parser, Debug)]
#[command(name = "wtrap", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run one ensemble and write one data row.
    Simulate(SimulateArgs),
    /// Run one ensemble per step size and fit log|error| against log h.
    Convergence(ConvergenceArgs),
    /// Sweep the scheme parameter θ, reporting clamp fractions or slopes.
    ThetaSweep(ThetaSweepArgs),
}

#[derive(Args, Debug)]
pub struct CommonArgs {
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Worker threads; 0 picks a sensible default. Results never depend
    /// on this value.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,

    /// Master seed; all per-path and per-grid streams derive from it.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// System name: ou, talay, theta-test, const, linear-1d.
    #[arg(long)]
    pub system: String,

    /// Scheme name: wt, euler, midpoint-drift, richardson.
    #[arg(long)]
    pub scheme: String,

    /// θ for the wt scheme, strictly inside (0, 1).
    #[arg(long)]
    pub theta: Option<f64>,

    /// Step size; T/h must be an integer.
    #[arg(long)]
    pub h: f64,

    /// Horizon.
    #[arg(long = "T", default_value_t = 1.0)]
    pub t_final: f64,

    /// Number of sample paths.
    #[arg(long)]
    pub paths: u64,

    /// Terminal functional: x1, x1sq, x2sq, norm-sq.
    #[arg(long)]
    pub functional: String,

    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug)]
pub struct ConvergenceArgs {
    /// System name; required unless --preset or --self-test is given.
    #[arg(long)]
    pub system: Option<String>,

    /// Scheme name; required unless --preset or --self-test is given.
    #[arg(long)]
    pub scheme: Option<String>,

    /// θ for the wt scheme.
    #[arg(long)]
    pub theta: Option<f64>,

    /// Comma-separated step sizes, e.g. 0.25,0.125,0.0625.
    #[arg(long = "h-list", value_delimiter = ',')]
    pub h_list: Option<Vec<f64>>,

    /// Horizon.
    #[arg(long = "T", default_value_t = 1.0)]
    pub t_final: f64,

    /// Paths per step size.
    #[arg(long)]
    pub paths: Option<u64>,

    /// Terminal functional; must have a closed-form moment for the system.
    #[arg(long)]
    pub functional: Option<String>,

    /// Canned experiment: fig2a or fig2b.
    #[arg(long)]
    pub preset: Option<String>,

    /// Divide the preset's path counts by this factor (≥ 1).
    #[arg(long)]
    pub scale: Option<f64>,

    /// Fit synthetic power-law data instead of simulating; sanity-checks
    /// the fitting pipeline end to end.
    #[arg(long = "self-test", default_value_t = false)]
    pub self_test: bool,

    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum SweepMode {
    /// Fraction of clamped steps per θ.
    Frac,
    /// Fitted convergence slope per θ.
    Slope,
}

#[derive(Args, Debug)]
pub struct ThetaSweepArgs {
    /// frac: clamp fractions at one h. slope: convergence slope per θ.
    #[arg(long, value_enum)]
    pub mode: SweepMode,

    /// System name.
    #[arg(long)]
    pub system: String,

    /// Comma-separated θ values; frac mode defaults to 0.02..0.98.
    #[arg(long = "theta-list", value_delimiter = ',')]
    pub theta_list: Option<Vec<f64>>,

    /// Step size (frac mode).
    #[arg(long)]
    pub h: Option<f64>,

    /// Comma-separated step sizes (slope mode).
    #[arg(long = "h-list", value_delimiter = ',')]
    pub h_list: Option<Vec<f64>>,

    /// Horizon.
    #[arg(long = "T", default_value_t = 1.0)]
    pub t_final: f64,

    /// Paths per ensemble.
    #[arg(long)]
    pub paths: u64,

    /// Terminal functional; frac mode defaults to x1.
    #[arg(long)]
    pub functional: Option<String>,

    #[command(flatten)]
    pub common: CommonArgs,
}
