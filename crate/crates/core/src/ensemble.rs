//! Monte-Carlo ensembles: N independent paths to a fixed horizon, a
//! terminal functional, and moment estimates with standard errors.
//!
//! Determinism contract: path i always consumes the stream
//! (master_seed, i), paths are processed in fixed chunks of
//! [`CHUNK_PATHS`], and the per-chunk moment accumulators are merged in
//! chunk order. The result is therefore bit-identical for any worker
//! count, including 1.

use rayon::prelude::*;

use crate::error::{EnsembleError, StepError};
use crate::model::{Functional, SdeSystem};
use crate::rng::stream_for_path;
use crate::schemes::{Kernel, ThetaScheme};

/// Paths per work unit. Fixed: it is part of the determinism contract
/// (the reduction tree depends on it, scheduling does not).
pub const CHUNK_PATHS: u64 = 4096;

/// Fraction of paths allowed to blow up before the run is rejected.
pub const MAX_BLOWUP_FRACTION: f64 = 1e-3;

/// Relative tolerance for T/h being an integer step count.
pub const STEP_COUNT_TOLERANCE: f64 = 1e-9;

/// Which one-step map an ensemble advances.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SchemeChoice {
    WeakTrapezoidal(ThetaScheme),
    Euler,
    MidpointDrift,
}

impl SchemeChoice {
    pub fn name(&self) -> &'static str {
        match self {
            Self::WeakTrapezoidal(_) => "wt",
            Self::Euler => "euler",
            Self::MidpointDrift => "midpoint-drift",
        }
    }

    pub fn theta(&self) -> Option<f64> {
        match self {
            Self::WeakTrapezoidal(s) => Some(s.theta()),
            _ => None,
        }
    }
}

/// Everything one ensemble run needs.
#[derive(Clone)]
pub struct EnsembleSpec {
    pub system: SdeSystem,
    pub scheme: SchemeChoice,
    pub h: f64,
    pub t_final: f64,
    pub n_paths: u64,
    pub master_seed: u64,
    pub functional: Functional,
}

impl EnsembleSpec {
    /// Validates the fields and returns the step count. T/h must be an
    /// integer (within [`STEP_COUNT_TOLERANCE`], so grids like 1/3ᵏ pass);
    /// the run refuses to adjust h silently.
    pub fn validate(&self) -> Result<u64, EnsembleError> {
        if !self.h.is_finite() || self.h <= 0.0 {
            return Err(EnsembleError::InvalidSpec(format!(
                "step size must be positive and finite, got {}",
                self.h
            )));
        }
        if !self.t_final.is_finite() || self.t_final <= 0.0 {
            return Err(EnsembleError::InvalidSpec(format!(
                "horizon must be positive and finite, got {}",
                self.t_final
            )));
        }
        if self.n_paths < 2 {
            return Err(EnsembleError::InvalidSpec(format!(
                "need at least 2 paths, got {}",
                self.n_paths
            )));
        }
        let ratio = self.t_final / self.h;
        let steps = ratio.round();
        if steps < 1.0
            || (steps * self.h - self.t_final).abs()
                > STEP_COUNT_TOLERANCE * self.t_final.abs().max(1.0)
        {
            return Err(EnsembleError::InvalidSpec(format!(
                "T/h must be a positive integer number of steps; T = {}, h = {} gives {}",
                self.t_final, self.h, ratio
            )));
        }
        self.functional
            .check(&self.system)
            .map_err(|e| EnsembleError::InvalidSpec(e.to_string()))?;
        Ok(steps as u64)
    }
}

/// Moment estimates and degenerate-step statistics of one ensemble.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleEstimate {
    /// Sample mean of f(X(T)) over the included paths.
    pub mean: f64,
    /// Unbiased (N−1) sample variance.
    pub variance: f64,
    /// √(variance / n_paths).
    pub stderr: f64,
    /// Paths included in the estimate (requested minus excluded).
    pub n_paths: u64,
    /// Paths excluded after a step failure; bounded by the blow-up gate.
    pub excluded_paths: u64,
    /// Steps taken by included paths.
    pub total_steps: u64,
    /// degenerate steps / total steps; populated for the trapezoidal
    /// scheme only (a step is degenerate if any channel clamped).
    pub degenerate_fraction: Option<f64>,
    /// Per-channel clamp counts, trapezoidal scheme only.
    pub degenerate_by_channel: Option<Vec<u64>>,
}

/// Signed error of an estimate against a closed-form value:
/// (exact − mean, stderr).
pub fn estimate_error(estimate: &EnsembleEstimate, exact: f64) -> (f64, f64) {
    (exact - estimate.mean, estimate.stderr)
}

#[derive(Clone)]
struct ChunkStat {
    count: u64,
    mean: f64,
    m2: f64,
    total_steps: u64,
    degen_steps: u64,
    degen_by_channel: Vec<u64>,
    excluded: u64,
    first_failure: Option<(u64, u64, StepError)>,
}

impl ChunkStat {
    fn new(channels: usize) -> Self {
        Self {
            count: 0,
            mean: 0.0,
            m2: 0.0,
            total_steps: 0,
            degen_steps: 0,
            degen_by_channel: vec![0; channels],
            excluded: 0,
            first_failure: None,
        }
    }

    #[inline]
    fn push(&mut self, value: f64) {
        self.count += 1;
        let delta = value - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (value - self.mean);
    }

    /// Pairwise moment merge; exact association order is fixed by the
    /// caller (chunk index order).
    fn merge(mut self, other: ChunkStat) -> ChunkStat {
        if other.count > 0 {
            if self.count == 0 {
                self.count = other.count;
                self.mean = other.mean;
                self.m2 = other.m2;
            } else {
                let n1 = self.count as f64;
                let n2 = other.count as f64;
                let n = n1 + n2;
                let delta = other.mean - self.mean;
                self.mean += delta * (n2 / n);
                self.m2 += other.m2 + delta * delta * (n1 * n2 / n);
                self.count += other.count;
            }
        }
        self.total_steps += other.total_steps;
        self.degen_steps += other.degen_steps;
        for (a, b) in self
            .degen_by_channel
            .iter_mut()
            .zip(&other.degen_by_channel)
        {
            *a += b;
        }
        self.excluded += other.excluded;
        self.first_failure = match (self.first_failure.take(), other.first_failure) {
            (Some(a), Some(b)) => Some(if a.0 <= b.0 { a } else { b }),
            (a, b) => a.or(b),
        };
        self
    }
}

fn run_chunk(spec: &EnsembleSpec, lo: u64, hi: u64, n_steps: u64) -> ChunkStat {
    let sys = &spec.system;
    let d = sys.dim();
    let m = sys.num_channels();
    let obs = sys.observable_dim();
    let mut kernel = Kernel::new(sys);
    let mut state = vec![0.0; d];
    let mut next = vec![0.0; d];
    let mut eta1 = vec![0.0; m];
    let mut eta2 = vec![0.0; m];
    let mut degen = vec![false; m];
    let mut path_chan = vec![0u64; m];
    let mut acc = ChunkStat::new(m);

    for path in lo..hi {
        let mut stream = stream_for_path(spec.master_seed, path);
        state.copy_from_slice(sys.initial());
        let mut path_degen: u64 = 0;
        path_chan.fill(0);
        let mut failure: Option<(u64, StepError)> = None;

        for step in 0..n_steps {
            let result = match spec.scheme {
                SchemeChoice::WeakTrapezoidal(sch) => {
                    stream.fill_normals(&mut eta1);
                    stream.fill_normals(&mut eta2);
                    let r = kernel.wt(&state, spec.h, sch, &eta1, &eta2, &mut next, &mut degen);
                    if r.is_ok() {
                        let mut any = false;
                        for (k, &dg) in degen.iter().enumerate() {
                            if dg {
                                any = true;
                                path_chan[k] += 1;
                            }
                        }
                        if any {
                            path_degen += 1;
                        }
                    }
                    r
                }
                SchemeChoice::Euler => {
                    stream.fill_normals(&mut eta1);
                    kernel.euler(&state, spec.h, &eta1, &mut next)
                }
                SchemeChoice::MidpointDrift => {
                    stream.fill_normals(&mut eta1);
                    kernel.midpoint_drift(&state, spec.h, &eta1, &mut next)
                }
            };
            match result {
                Ok(()) => std::mem::swap(&mut state, &mut next),
                Err(e) => {
                    failure = Some((step, e));
                    break;
                }
            }
        }

        match failure {
            None => {
                acc.push(spec.functional.apply(&state, obs));
                acc.total_steps += n_steps;
                acc.degen_steps += path_degen;
                for (a, b) in acc.degen_by_channel.iter_mut().zip(&path_chan) {
                    *a += b;
                }
            }
            Some((step, e)) => {
                acc.excluded += 1;
                if acc.first_failure.is_none() {
                    acc.first_failure = Some((path, step, e));
                }
            }
        }
    }
    acc
}

/// Runs the ensemble. Deterministic for a fixed spec regardless of the
/// rayon worker count. Fails if more than [`MAX_BLOWUP_FRACTION`] of the
/// requested paths blow up.
pub fn run_ensemble(spec: &EnsembleSpec) -> Result<EnsembleEstimate, EnsembleError> {
    let n_steps = spec.validate()?;
    let n = spec.n_paths;
    let n_chunks = n.div_ceil(CHUNK_PATHS);
    let stats: Vec<ChunkStat> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK_PATHS;
            let hi = (lo + CHUNK_PATHS).min(n);
            run_chunk(spec, lo, hi, n_steps)
        })
        .collect();

    let m = spec.system.num_channels();
    let merged = stats.into_iter().fold(ChunkStat::new(m), |a, b| a.merge(b));

    let allowed = (MAX_BLOWUP_FRACTION * n as f64).floor() as u64;
    if merged.excluded > allowed {
        let (first_path, first_step, source) = merged
            .first_failure
            .expect("exclusions imply a recorded failure");
        return Err(EnsembleError::TooManyBlowups {
            excluded: merged.excluded,
            total: n,
            allowed,
            first_path,
            first_step,
            source,
        });
    }
    if merged.count < 2 {
        return Err(EnsembleError::InvalidSpec(
            "fewer than 2 paths survived".into(),
        ));
    }

    let variance = merged.m2 / (merged.count - 1) as f64;
    let stderr = (variance / merged.count as f64).sqrt();
    let is_wt = matches!(spec.scheme, SchemeChoice::WeakTrapezoidal(_));
    Ok(EnsembleEstimate {
        mean: merged.mean,
        variance,
        stderr,
        n_paths: merged.count,
        excluded_paths: merged.excluded,
        total_steps: merged.total_steps,
        degenerate_fraction: is_wt.then(|| {
            if merged.total_steps == 0 {
                0.0
            } else {
                merged.degen_steps as f64 / merged.total_steps as f64
            }
        }),
        degenerate_by_channel: is_wt.then(|| merged.degen_by_channel.clone()),
    })
}

/// Degenerate-step fraction of the trapezoidal scheme for each θ, each
/// from an independently seeded ensemble (seed derived from the θ index).
pub fn degenerate_sweep(
    system: &SdeSystem,
    thetas: &[f64],
    h: f64,
    t_final: f64,
    n_paths: u64,
    master_seed: u64,
) -> Result<Vec<(f64, f64)>, crate::error::StudyError> {
    let mut out = Vec::with_capacity(thetas.len());
    for (j, &theta) in thetas.iter().enumerate() {
        let scheme = crate::schemes::make_theta_scheme(theta)?;
        let spec = EnsembleSpec {
            system: system.clone(),
            scheme: SchemeChoice::WeakTrapezoidal(scheme),
            h,
            t_final,
            n_paths,
            master_seed: crate::rng::derive_seed(master_seed, j as u64),
            functional: Functional::X1,
        };
        let est = run_ensemble(&spec)?;
        out.push((
            theta,
            est.degenerate_fraction
                .expect("trapezoidal runs always report a degenerate fraction"),
        ));
    }
    Ok(out)
}
