//! The SDE problem class: a drift field plus noise channels that act at
//! state-dependent scalar rates along fixed directions,
//!
//! dX(t) = b(X(t)) dt + Σ_k σ_k(X(t)) ν_k dW_k(t),
//!
//! with X ∈ ℝᵈ, σ_k: ℝᵈ → ℝ₊ and constant ν_k ∈ ℝᵈ. Systems with
//! coefficients that depend explicitly on time are brought into this
//! autonomous form by [`augment_time`], which appends a clock coordinate.

use std::sync::Arc;

use crate::error::ModelError;

/// Drift evaluator: writes b(x) into `out`. Must be pure and reentrant.
pub type DriftEval = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// Rate evaluator: returns σ_k(x) ≥ 0. Must be pure and reentrant.
pub type RateEval = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// Time-dependent drift evaluator, `(t, x, out)`.
pub type TimeDriftEval = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;
/// Time-dependent rate evaluator, `(t, x) -> rate`.
pub type TimeRateEval = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

/// One noise channel: a scalar rate σ_k(x) acting along the constant
/// direction ν_k. The direction never depends on the state.
#[derive(Clone)]
pub struct NoiseChannel {
    rate: RateEval,
    direction: Vec<f64>,
}

impl NoiseChannel {
    pub fn new(rate: RateEval, direction: Vec<f64>) -> Self {
        Self { rate, direction }
    }

    /// σ_k(x). Callers on the hot path check the sign themselves.
    #[inline]
    pub fn rate(&self, x: &[f64]) -> f64 {
        (self.rate)(x)
    }

    /// ν_k. Returns the same bits on every call.
    #[inline]
    pub fn direction(&self) -> &[f64] {
        &self.direction
    }
}

/// An autonomous SDE with fixed-direction noise, immutable after
/// construction and shareable across threads.
///
/// `observable_dim` marks how many leading coordinates carry the actual
/// state; coordinates beyond it (the clock added by [`augment_time`]) are
/// excluded from functionals such as the squared norm.
#[derive(Clone)]
pub struct SdeSystem {
    name: String,
    dim: usize,
    observable_dim: usize,
    initial: Vec<f64>,
    drift: DriftEval,
    channels: Vec<NoiseChannel>,
}

impl std::fmt::Debug for SdeSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SdeSystem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("observable_dim", &self.observable_dim)
            .field("initial", &self.initial)
            .field("channels", &self.channels.len())
            .finish_non_exhaustive()
    }
}

impl SdeSystem {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        initial: Vec<f64>,
        drift: DriftEval,
        channels: Vec<NoiseChannel>,
    ) -> Result<Self, ModelError> {
        Self::with_observable_dim(name, dim, dim, initial, drift, channels)
    }

    pub fn with_observable_dim(
        name: impl Into<String>,
        dim: usize,
        observable_dim: usize,
        initial: Vec<f64>,
        drift: DriftEval,
        channels: Vec<NoiseChannel>,
    ) -> Result<Self, ModelError> {
        if dim == 0 {
            return Err(ModelError::DimensionMismatch { want: 1, got: 0 });
        }
        if observable_dim == 0 || observable_dim > dim {
            return Err(ModelError::BadObservableDim {
                observable: observable_dim,
                dim,
            });
        }
        if initial.len() != dim {
            return Err(ModelError::BadInitialState {
                want: dim,
                got: initial.len(),
            });
        }
        for (k, ch) in channels.iter().enumerate() {
            if ch.direction.len() != dim {
                return Err(ModelError::BadDirection {
                    channel: k,
                    want: dim,
                    got: ch.direction.len(),
                });
            }
        }
        Ok(Self {
            name: name.into(),
            dim,
            observable_dim,
            initial,
            drift,
            channels,
        })
    }

    #[inline]
    pub fn name(&self) -> &str {
        &self.name
    }

    /// d, the state dimension.
    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of leading coordinates functionals may read.
    #[inline]
    pub fn observable_dim(&self) -> usize {
        self.observable_dim
    }

    /// M, the number of noise channels. M = 0 is a deterministic ODE.
    #[inline]
    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    #[inline]
    pub fn channels(&self) -> &[NoiseChannel] {
        &self.channels
    }

    #[inline]
    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    /// Writes b(x) into `out` without allocating. Hot path; lengths are
    /// only debug-checked.
    #[inline]
    pub fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim);
        (self.drift)(x, out);
    }

    /// b(x) with full validation; allocates the result.
    pub fn evaluate_drift(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        if x.len() != self.dim {
            return Err(ModelError::DimensionMismatch {
                want: self.dim,
                got: x.len(),
            });
        }
        let mut out = vec![0.0; self.dim];
        (self.drift)(x, &mut out);
        Ok(out)
    }

    /// σ_k(x) with full validation. Channels are indexed from 0.
    pub fn evaluate_rate(&self, x: &[f64], k: usize) -> Result<f64, ModelError> {
        if x.len() != self.dim {
            return Err(ModelError::DimensionMismatch {
                want: self.dim,
                got: x.len(),
            });
        }
        let Some(ch) = self.channels.get(k) else {
            return Err(ModelError::ChannelOutOfRange {
                index: k,
                channels: self.channels.len(),
            });
        };
        let value = ch.rate(x);
        if !value.is_finite() || value < 0.0 {
            return Err(ModelError::InvalidRate { channel: k, value });
        }
        Ok(value)
    }
}

/// A time-dependent channel prior to autonomization.
pub struct TimeChannel {
    pub rate: TimeRateEval,
    pub direction: Vec<f64>,
}

/// Autonomizes a system whose drift/rates depend explicitly on time.
///
/// The result has dimension `dim + 1`; the appended clock coordinate s
/// starts at `t0`, satisfies ds = 1·dt and carries no diffusion (every
/// direction is zero-padded). Evaluators read t from the clock, so the
/// one-step maps keep their autonomous form. The observable dimension of
/// the result is `dim`: functionals ignore the clock.
pub fn augment_time(
    name: impl Into<String>,
    dim: usize,
    initial: Vec<f64>,
    t0: f64,
    drift: TimeDriftEval,
    channels: Vec<TimeChannel>,
) -> Result<SdeSystem, ModelError> {
    if initial.len() != dim {
        return Err(ModelError::BadInitialState {
            want: dim,
            got: initial.len(),
        });
    }
    let mut init = initial;
    init.push(t0);

    let adrift: DriftEval = Arc::new(move |x: &[f64], out: &mut [f64]| {
        let (state, clock) = x.split_at(dim);
        drift(clock[0], state, &mut out[..dim]);
        out[dim] = 1.0;
    });

    let mut achannels = Vec::with_capacity(channels.len());
    for (k, ch) in channels.into_iter().enumerate() {
        if ch.direction.len() != dim {
            return Err(ModelError::BadDirection {
                channel: k,
                want: dim,
                got: ch.direction.len(),
            });
        }
        let mut dir = ch.direction;
        dir.push(0.0);
        let rate = ch.rate;
        let arate: RateEval = Arc::new(move |x: &[f64]| rate(x[dim], &x[..dim]));
        achannels.push(NoiseChannel::new(arate, dir));
    }

    SdeSystem::with_observable_dim(name, dim + 1, dim, init, adrift, achannels)
}

/// Terminal functionals f(X(T)) the harness can estimate. All read only
/// the observable coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Functional {
    /// X₁
    X1,
    /// X₁²
    X1Sq,
    /// X₂²
    X2Sq,
    /// |X|² over the observable coordinates
    NormSq,
}

impl Functional {
    pub const ALL: [Functional; 4] = [
        Functional::X1,
        Functional::X1Sq,
        Functional::X2Sq,
        Functional::NormSq,
    ];

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "x1" => Some(Self::X1),
            "x1sq" => Some(Self::X1Sq),
            "x2sq" => Some(Self::X2Sq),
            "norm-sq" => Some(Self::NormSq),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::X1 => "x1",
            Self::X1Sq => "x1sq",
            Self::X2Sq => "x2sq",
            Self::NormSq => "norm-sq",
        }
    }

    /// Minimum observable dimension the functional needs.
    pub fn min_dim(&self) -> usize {
        match self {
            Self::X1 | Self::X1Sq | Self::NormSq => 1,
            Self::X2Sq => 2,
        }
    }

    /// Checks the functional against a system's observable dimension.
    pub fn check(&self, system: &SdeSystem) -> Result<(), ModelError> {
        if system.observable_dim() < self.min_dim() {
            return Err(ModelError::FunctionalMismatch {
                functional: self.name(),
                want: self.min_dim(),
                got: system.observable_dim(),
            });
        }
        Ok(())
    }

    #[inline]
    pub fn apply(&self, x: &[f64], observable_dim: usize) -> f64 {
        debug_assert!(observable_dim <= x.len());
        match self {
            Self::X1 => x[0],
            Self::X1Sq => x[0] * x[0],
            Self::X2Sq => x[1] * x[1],
            Self::NormSq => x[..observable_dim].iter().map(|v| v * v).sum(),
        }
    }
}
