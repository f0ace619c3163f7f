//! One-step maps for all integrators.
//!
//! The weak trapezoidal step advances over [0, h] in two substeps. With
//! α₁ = 1/(2θ(1−θ)) and α₂ = ((1−θ)² + θ²)/(2θ(1−θ)):
//!
//! Step 1 (predictor, an Euler step of length θh):
//!   y* = x + b(x)θh + Σ_k σ_k(x) ν_k η₁ₖ √(θh)
//! Step 2 (corrector over the remaining (1−θ)h):
//!   Y  = y* + (α₁ b(y*) − α₂ b(x))(1−θ)h
//!          + Σ_k √([α₁ σ_k²(y*) − α₂ σ_k²(x)]⁺) ν_k η₂ₖ √((1−θ)h)
//!
//! α₁ − α₂ = 1 for every θ, so constant-rate channels are reproduced
//! exactly and the clamp [·]⁺ never engages for them. A step where the
//! clamp zeroes channel k (α₁σ_k²(y*) − α₂σ_k²(x) < 0, ties count as
//! non-degenerate) is called degenerate and is flagged per channel.
//!
//! Comparators: Euler, a midpoint-drift variant (half-step predictor for
//! the drift only), and the coupled Euler pair used by Richardson
//! extrapolation, where the coarse step consumes (η₁+η₂)/√2 so both
//! resolutions see the same Brownian increments.

use crate::error::{InvalidTheta, StepError};
use crate::model::SdeSystem;

/// θ together with the derived extrapolation weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThetaScheme {
    theta: f64,
    alpha1: f64,
    alpha2: f64,
}

impl ThetaScheme {
    #[inline]
    pub fn theta(&self) -> f64 {
        self.theta
    }

    #[inline]
    pub fn alpha1(&self) -> f64 {
        self.alpha1
    }

    #[inline]
    pub fn alpha2(&self) -> f64 {
        self.alpha2
    }

    /// g(θ) = α₂/α₁ = 1 − 2θ + 2θ², the degenerate-step threshold:
    /// channel k degenerates iff σ_k²(y*) < g(θ)σ_k²(x).
    #[inline]
    pub fn degenerate_threshold(&self) -> f64 {
        1.0 - 2.0 * self.theta + 2.0 * self.theta * self.theta
    }
}

/// Builds the scheme for θ ∈ (0, 1).
pub fn make_theta_scheme(theta: f64) -> Result<ThetaScheme, InvalidTheta> {
    if !theta.is_finite() || theta <= 0.0 || theta >= 1.0 {
        return Err(InvalidTheta(theta));
    }
    let denom = 2.0 * theta * (1.0 - theta);
    let alpha1 = 1.0 / denom;
    let alpha2 = ((1.0 - theta) * (1.0 - theta) + theta * theta) / denom;
    Ok(ThetaScheme {
        theta,
        alpha1,
        alpha2,
    })
}

/// New state plus the per-channel degenerate flags of one trapezoidal step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub state: Vec<f64>,
    /// degenerate[k] is true iff the clamp zeroed channel k this step.
    pub degenerate: Vec<bool>,
}

#[inline]
fn check_rate(k: usize, value: f64) -> Result<f64, StepError> {
    // NaN fails the comparison, so it lands here as well.
    if value >= 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(StepError::InvalidRate { channel: k, value })
    }
}

#[inline]
fn ensure_finite(state: &[f64]) -> Result<(), StepError> {
    if state.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(StepError::NonfiniteState)
    }
}

fn check_lens(sys: &SdeSystem, x: &[f64], normal_sets: &[&[f64]]) -> Result<(), StepError> {
    if x.len() != sys.dim() {
        return Err(StepError::DimensionMismatch {
            what: "state",
            want: sys.dim(),
            got: x.len(),
        });
    }
    for set in normal_sets {
        if set.len() != sys.num_channels() {
            return Err(StepError::DimensionMismatch {
                what: "normals",
                want: sys.num_channels(),
                got: set.len(),
            });
        }
    }
    Ok(())
}

/// Reusable working buffers for the one-step maps. One per worker; the
/// maps themselves are pure in the system and inputs.
pub struct Kernel<'a> {
    sys: &'a SdeSystem,
    b0: Vec<f64>,
    b1: Vec<f64>,
    y: Vec<f64>,
    rates0: Vec<f64>,
    mix: Vec<f64>,
    tmp: Vec<f64>,
}

impl<'a> Kernel<'a> {
    pub fn new(sys: &'a SdeSystem) -> Self {
        let d = sys.dim();
        let m = sys.num_channels();
        Self {
            sys,
            b0: vec![0.0; d],
            b1: vec![0.0; d],
            y: vec![0.0; d],
            rates0: vec![0.0; m],
            mix: vec![0.0; m],
            tmp: vec![0.0; d],
        }
    }

    #[inline]
    pub fn system(&self) -> &SdeSystem {
        self.sys
    }

    /// x + b(x)h + Σ_k σ_k(x) ν_k η_k √h
    #[inline]
    pub fn euler(
        &mut self,
        x: &[f64],
        h: f64,
        eta: &[f64],
        out: &mut [f64],
    ) -> Result<(), StepError> {
        euler_core(self.sys, x, h, eta, &mut self.b0, out)
    }

    /// Drift through a half-step predictor, diffusion from the left state:
    /// y* = x + b(x)h/2;  Y = x + b(y*)h + Σ_k σ_k(x) ν_k η_k √h
    pub fn midpoint_drift(
        &mut self,
        x: &[f64],
        h: f64,
        eta: &[f64],
        out: &mut [f64],
    ) -> Result<(), StepError> {
        let d = self.sys.dim();
        debug_assert_eq!(x.len(), d);
        debug_assert_eq!(out.len(), d);
        self.sys.drift_into(x, &mut self.b0);
        let half = 0.5 * h;
        for i in 0..d {
            self.y[i] = x[i] + self.b0[i] * half;
        }
        self.sys.drift_into(&self.y, &mut self.b1);
        for i in 0..d {
            out[i] = x[i] + self.b1[i] * h;
        }
        let sh = h.sqrt();
        for (k, ch) in self.sys.channels().iter().enumerate() {
            let r = check_rate(k, ch.rate(x))?;
            let c = r * eta[k] * sh;
            for (o, v) in out.iter_mut().zip(ch.direction()) {
                *o += c * v;
            }
        }
        ensure_finite(out)
    }

    /// The weak trapezoidal step. `eta1` feeds the predictor, `eta2` the
    /// corrector (stage-major, channel-minor draw order).
    pub fn wt(
        &mut self,
        x: &[f64],
        h: f64,
        scheme: ThetaScheme,
        eta1: &[f64],
        eta2: &[f64],
        out: &mut [f64],
        degenerate: &mut [bool],
    ) -> Result<(), StepError> {
        let d = self.sys.dim();
        debug_assert_eq!(x.len(), d);
        debug_assert_eq!(out.len(), d);
        debug_assert_eq!(degenerate.len(), self.sys.num_channels());
        let theta = scheme.theta;
        let dt1 = theta * h;
        self.sys.drift_into(x, &mut self.b0);
        for i in 0..d {
            self.y[i] = x[i] + self.b0[i] * dt1;
        }
        let s1 = dt1.sqrt();
        for (k, ch) in self.sys.channels().iter().enumerate() {
            let r = check_rate(k, ch.rate(x))?;
            self.rates0[k] = r;
            let c = r * eta1[k] * s1;
            for (y, v) in self.y.iter_mut().zip(ch.direction()) {
                *y += c * v;
            }
        }

        let dt2 = (1.0 - theta) * h;
        self.sys.drift_into(&self.y, &mut self.b1);
        for i in 0..d {
            out[i] = self.y[i] + (scheme.alpha1 * self.b1[i] - scheme.alpha2 * self.b0[i]) * dt2;
        }
        let s2 = dt2.sqrt();
        for (k, ch) in self.sys.channels().iter().enumerate() {
            let ry = check_rate(k, ch.rate(&self.y))?;
            let rx = self.rates0[k];
            let arg = scheme.alpha1 * ry * ry - scheme.alpha2 * rx * rx;
            // a tie (arg == 0) is counted as non-degenerate
            let deg = arg < 0.0;
            degenerate[k] = deg;
            if !deg {
                let c = arg.sqrt() * eta2[k] * s2;
                for (o, v) in out.iter_mut().zip(ch.direction()) {
                    *o += c * v;
                }
            }
        }
        ensure_finite(out)
    }

    /// Advances the coupled Richardson pair one full step of size h. The
    /// fine path `zh2` takes two Euler half-steps driven by `eta1`, then
    /// `eta2`; the coarse path `zh` takes one Euler step of size h driven
    /// by (η₁ₖ + η₂ₖ)/√2, so both consume the same Brownian increments.
    pub fn richardson_pair(
        &mut self,
        h: f64,
        eta1: &[f64],
        eta2: &[f64],
        zh: &mut [f64],
        zh2: &mut [f64],
    ) -> Result<(), StepError> {
        let half = 0.5 * h;
        euler_core(self.sys, zh2, half, eta1, &mut self.b0, &mut self.tmp)?;
        euler_core(self.sys, &self.tmp, half, eta2, &mut self.b0, zh2)?;
        for (m, (a, b)) in self.mix.iter_mut().zip(eta1.iter().zip(eta2)) {
            *m = (a + b) * std::f64::consts::FRAC_1_SQRT_2;
        }
        euler_core(self.sys, zh, h, &self.mix, &mut self.b0, &mut self.tmp)?;
        zh.copy_from_slice(&self.tmp);
        Ok(())
    }
}

#[inline]
fn euler_core(
    sys: &SdeSystem,
    x: &[f64],
    h: f64,
    eta: &[f64],
    b: &mut [f64],
    out: &mut [f64],
) -> Result<(), StepError> {
    let d = sys.dim();
    debug_assert_eq!(x.len(), d);
    debug_assert_eq!(out.len(), d);
    debug_assert_eq!(eta.len(), sys.num_channels());
    sys.drift_into(x, b);
    for i in 0..d {
        out[i] = x[i] + b[i] * h;
    }
    let sh = h.sqrt();
    for (k, ch) in sys.channels().iter().enumerate() {
        let r = check_rate(k, ch.rate(x))?;
        let c = r * eta[k] * sh;
        for (o, v) in out.iter_mut().zip(ch.direction()) {
            *o += c * v;
        }
    }
    ensure_finite(out)
}

/// Euler–Maruyama step; validating, allocating variant.
pub fn euler_step(
    sys: &SdeSystem,
    x: &[f64],
    h: f64,
    normals: &[f64],
) -> Result<Vec<f64>, StepError> {
    check_lens(sys, x, &[normals])?;
    let mut out = vec![0.0; sys.dim()];
    Kernel::new(sys).euler(x, h, normals, &mut out)?;
    Ok(out)
}

/// Midpoint-drift step; validating, allocating variant.
pub fn midpoint_drift_step(
    sys: &SdeSystem,
    x: &[f64],
    h: f64,
    normals: &[f64],
) -> Result<Vec<f64>, StepError> {
    check_lens(sys, x, &[normals])?;
    let mut out = vec![0.0; sys.dim()];
    Kernel::new(sys).midpoint_drift(x, h, normals, &mut out)?;
    Ok(out)
}

/// Weak trapezoidal step; validating, allocating variant.
pub fn wt_step(
    sys: &SdeSystem,
    x: &[f64],
    h: f64,
    scheme: ThetaScheme,
    normals1: &[f64],
    normals2: &[f64],
) -> Result<StepResult, StepError> {
    check_lens(sys, x, &[normals1, normals2])?;
    let mut state = vec![0.0; sys.dim()];
    let mut degenerate = vec![false; sys.num_channels()];
    Kernel::new(sys).wt(
        x,
        h,
        scheme,
        normals1,
        normals2,
        &mut state,
        &mut degenerate,
    )?;
    Ok(StepResult { state, degenerate })
}

/// Coupled Richardson pair step; validating, allocating variant. Returns
/// the advanced (coarse, fine) states.
pub fn richardson_pair_step(
    sys: &SdeSystem,
    zh: &[f64],
    zh2: &[f64],
    h: f64,
    normals_half1: &[f64],
    normals_half2: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), StepError> {
    check_lens(sys, zh, &[normals_half1, normals_half2])?;
    check_lens(sys, zh2, &[])?;
    let mut coarse = zh.to_vec();
    let mut fine = zh2.to_vec();
    Kernel::new(sys).richardson_pair(h, normals_half1, normals_half2, &mut coarse, &mut fine)?;
    Ok((coarse, fine))
}
