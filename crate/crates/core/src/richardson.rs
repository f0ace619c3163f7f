//! Coupled Richardson extrapolation of the Euler scheme.
//!
//! Each path advances a fine chain (step h/2) and a coarse chain (step
//! h) from the same noise: the coarse step consumes (η₁ + η₂)/√2 where
//! η₁, η₂ drive the two fine half-steps. The per-path estimator
//! 2·f(fine) − f(coarse) cancels the leading h term of the weak error,
//! and the coupling keeps its variance near the single-chain level
//! instead of the 4·Var(fine) + Var(coarse) an independent pair pays.

use rayon::prelude::*;

use crate::ensemble::{CHUNK_PATHS, MAX_BLOWUP_FRACTION, STEP_COUNT_TOLERANCE};
use crate::error::{EnsembleError, StepError};
use crate::model::{Functional, SdeSystem};
use crate::rng::stream_for_path;
use crate::schemes::Kernel;

/// Moment estimates of one coupled-pair run.
#[derive(Clone, Debug, PartialEq)]
pub struct RichardsonEstimate {
    /// Sample mean of 2·f(fine) − f(coarse).
    pub value: f64,
    /// Unbiased variance of the per-path combined estimator.
    pub variance: f64,
    /// √(variance / n_paths).
    pub stderr: f64,
    /// Paths included.
    pub n_paths: u64,
    /// Paths excluded after a step failure on either chain.
    pub excluded_paths: u64,
    /// Mean and variance of f(fine) alone.
    pub mean_fine: f64,
    pub var_fine: f64,
    /// Mean and variance of f(coarse) alone.
    pub mean_coarse: f64,
    pub var_coarse: f64,
}

impl RichardsonEstimate {
    /// Variance an independent fine/coarse pair would pay for the same
    /// combination, from this run's marginal variances.
    pub fn independent_pair_variance(&self) -> f64 {
        4.0 * self.var_fine + self.var_coarse
    }
}

#[derive(Clone, Copy)]
struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn new() -> Self {
        Self {
            count: 0,
            mean: 0.0,
            m2: 0.0,
        }
    }

    #[inline]
    fn push(&mut self, value: f64) {
        self.count += 1;
        let delta = value - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (value - self.mean);
    }

    fn merge(mut self, other: Welford) -> Welford {
        if other.count == 0 {
            return self;
        }
        if self.count == 0 {
            return other;
        }
        let n1 = self.count as f64;
        let n2 = other.count as f64;
        let n = n1 + n2;
        let delta = other.mean - self.mean;
        self.mean += delta * (n2 / n);
        self.m2 += other.m2 + delta * delta * (n1 * n2 / n);
        self.count += other.count;
        self
    }

    fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }
}

#[derive(Clone)]
struct ChunkStat {
    combined: Welford,
    fine: Welford,
    coarse: Welford,
    excluded: u64,
    first_failure: Option<(u64, u64, StepError)>,
}

impl ChunkStat {
    fn new() -> Self {
        Self {
            combined: Welford::new(),
            fine: Welford::new(),
            coarse: Welford::new(),
            excluded: 0,
            first_failure: None,
        }
    }

    fn merge(mut self, other: ChunkStat) -> ChunkStat {
        self.combined = self.combined.merge(other.combined);
        self.fine = self.fine.merge(other.fine);
        self.coarse = self.coarse.merge(other.coarse);
        self.excluded += other.excluded;
        self.first_failure = match (self.first_failure.take(), other.first_failure) {
            (Some(a), Some(b)) => Some(if a.0 <= b.0 { a } else { b }),
            (a, b) => a.or(b),
        };
        self
    }
}

fn validate(
    system: &SdeSystem,
    h: f64,
    t_final: f64,
    n_paths: u64,
    functional: Functional,
) -> Result<u64, EnsembleError> {
    if !h.is_finite() || h <= 0.0 {
        return Err(EnsembleError::InvalidSpec(format!(
            "step size must be positive and finite, got {h}"
        )));
    }
    if !t_final.is_finite() || t_final <= 0.0 {
        return Err(EnsembleError::InvalidSpec(format!(
            "horizon must be positive and finite, got {t_final}"
        )));
    }
    if n_paths < 2 {
        return Err(EnsembleError::InvalidSpec(format!(
            "need at least 2 paths, got {n_paths}"
        )));
    }
    let ratio = t_final / h;
    let steps = ratio.round();
    if steps < 1.0 || (steps * h - t_final).abs() > STEP_COUNT_TOLERANCE * t_final.abs().max(1.0) {
        return Err(EnsembleError::InvalidSpec(format!(
            "T/h must be a positive integer number of steps; T = {t_final}, h = {h} gives {ratio}"
        )));
    }
    functional
        .check(system)
        .map_err(|e| EnsembleError::InvalidSpec(e.to_string()))?;
    Ok(steps as u64)
}

fn run_chunk(
    system: &SdeSystem,
    h: f64,
    n_steps: u64,
    functional: Functional,
    master_seed: u64,
    lo: u64,
    hi: u64,
) -> ChunkStat {
    let d = system.dim();
    let m = system.num_channels();
    let obs = system.observable_dim();
    let mut kernel = Kernel::new(system);
    let mut fine = vec![0.0; d];
    let mut coarse = vec![0.0; d];
    let mut eta1 = vec![0.0; m];
    let mut eta2 = vec![0.0; m];
    let mut acc = ChunkStat::new();

    for path in lo..hi {
        let mut stream = stream_for_path(master_seed, path);
        fine.copy_from_slice(system.initial());
        coarse.copy_from_slice(system.initial());
        let mut failure: Option<(u64, StepError)> = None;

        for step in 0..n_steps {
            stream.fill_normals(&mut eta1);
            stream.fill_normals(&mut eta2);
            if let Err(e) = kernel.richardson_pair(h, &eta1, &eta2, &mut coarse, &mut fine) {
                failure = Some((step, e));
                break;
            }
        }

        match failure {
            None => {
                let f_fine = functional.apply(&fine, obs);
                let f_coarse = functional.apply(&coarse, obs);
                acc.combined.push(2.0 * f_fine - f_coarse);
                acc.fine.push(f_fine);
                acc.coarse.push(f_coarse);
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

/// Runs the coupled-pair ensemble. Deterministic for a fixed seed
/// regardless of worker count, by the same chunked reduction as the
/// plain ensembles.
pub fn run_richardson(
    system: &SdeSystem,
    h: f64,
    t_final: f64,
    n_paths: u64,
    master_seed: u64,
    functional: Functional,
) -> Result<RichardsonEstimate, EnsembleError> {
    let n_steps = validate(system, h, t_final, n_paths, functional)?;
    let n_chunks = n_paths.div_ceil(CHUNK_PATHS);
    let stats: Vec<ChunkStat> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK_PATHS;
            let hi = (lo + CHUNK_PATHS).min(n_paths);
            run_chunk(system, h, n_steps, functional, master_seed, lo, hi)
        })
        .collect();

    let merged = stats.into_iter().fold(ChunkStat::new(), ChunkStat::merge);

    let allowed = (MAX_BLOWUP_FRACTION * n_paths as f64).floor() as u64;
    if merged.excluded > allowed {
        let (first_path, first_step, source) = merged
            .first_failure
            .expect("exclusions imply a recorded failure");
        return Err(EnsembleError::TooManyBlowups {
            excluded: merged.excluded,
            total: n_paths,
            allowed,
            first_path,
            first_step,
            source,
        });
    }
    if merged.combined.count < 2 {
        return Err(EnsembleError::InvalidSpec(
            "fewer than 2 paths survived".into(),
        ));
    }

    let variance = merged.combined.variance();
    Ok(RichardsonEstimate {
        value: merged.combined.mean,
        variance,
        stderr: (variance / merged.combined.count as f64).sqrt(),
        n_paths: merged.combined.count,
        excluded_paths: merged.excluded,
        mean_fine: merged.fine.mean,
        var_fine: merged.fine.variance(),
        mean_coarse: merged.coarse.mean,
        var_coarse: merged.coarse.variance(),
    })
}
