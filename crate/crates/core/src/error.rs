//! Error types shared across the crate.

use thiserror::Error;

/// Violations of the model contracts (dimensions, channel indices, rates).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("state has length {got} but the system dimension is {want}")]
    DimensionMismatch { want: usize, got: usize },
    #[error("channel index {index} out of range for a system with {channels} channels")]
    ChannelOutOfRange { index: usize, channels: usize },
    #[error("direction vector for channel {channel} has length {got}, expected {want}")]
    BadDirection {
        channel: usize,
        want: usize,
        got: usize,
    },
    #[error("initial state has length {got}, expected {want}")]
    BadInitialState { want: usize, got: usize },
    #[error("observable dimension {observable} exceeds system dimension {dim}")]
    BadObservableDim { observable: usize, dim: usize },
    #[error("rate of channel {channel} evaluated to {value}; rates must be finite and >= 0")]
    InvalidRate { channel: usize, value: f64 },
    #[error(
        "functional {functional} needs at least {want} observable coordinates, system has {got}"
    )]
    FunctionalMismatch {
        functional: &'static str,
        want: usize,
        got: usize,
    },
}

/// Failures of a single integrator step.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepError {
    #[error("{what} has length {got}, expected {want}")]
    DimensionMismatch {
        what: &'static str,
        want: usize,
        got: usize,
    },
    #[error("rate of channel {channel} evaluated to {value}; rates must be finite and >= 0")]
    InvalidRate { channel: usize, value: f64 },
    #[error("state became nonfinite")]
    NonfiniteState,
}

/// Invalid θ passed to the scheme constructor.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("theta must lie strictly inside (0, 1), got {0}")]
pub struct InvalidTheta(pub f64);

/// Failures of a whole ensemble run.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnsembleError {
    #[error("invalid ensemble spec: {0}")]
    InvalidSpec(String),
    #[error(
        "{excluded} of {total} paths diverged (allowed at most {allowed}); \
         first failure on path {first_path} at step {first_step}: {source}"
    )]
    TooManyBlowups {
        excluded: u64,
        total: u64,
        allowed: u64,
        first_path: u64,
        first_step: u64,
        source: StepError,
    },
}

/// A convergence point whose error estimate failed the sampling gate.
#[derive(Debug, Clone, PartialEq)]
pub struct GatedPoint {
    pub h: f64,
    pub abs_error: f64,
    pub stderr: f64,
}

/// Failures of the slope-fitting stage.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("slope fit needs at least {min} points, got {got}")]
    TooFewPoints { min: usize, got: usize },
    #[error("step sizes must be positive, finite and distinct; offending h = {h}")]
    BadStepSize { h: f64 },
    #[error(
        "error magnitude at h = {h} is {value}; it must be strictly positive to fit a log-log \
         line (increase the path count or use a larger h)"
    )]
    NonpositiveError { h: f64, value: f64 },
    #[error(
        "refusing to fit: {} sampling-dominated point(s) with |error| < 2*stderr at h = [{}] \
         (increase the path count or drop these step sizes)",
        .0.len(),
        format_gated(.0)
    )]
    SamplingDominated(Vec<GatedPoint>),
}

fn format_gated(points: &[GatedPoint]) -> String {
    points
        .iter()
        .map(|p| {
            format!(
                "{} (|error| {:.3e} < {:.3e})",
                p.h,
                p.abs_error,
                2.0 * p.stderr
            )
        })
        .collect::<Vec<_>>()
        .join(", ")
}

/// Umbrella error for multi-stage studies.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum StudyError {
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Theta(#[from] InvalidTheta),
}
