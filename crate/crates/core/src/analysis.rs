//! Convergence studies: one ensemble per step size, a sampling gate,
//! and an ordinary least-squares fit of log|error| against log h.

use crate::benchmarks::MomentOracle;
use crate::ensemble::{estimate_error, run_ensemble, EnsembleSpec, SchemeChoice};
use crate::error::{AnalysisError, GatedPoint, StudyError};
use crate::model::{Functional, SdeSystem};
use crate::rng::derive_seed;
use crate::schemes::make_theta_scheme;

/// One (h, ensemble) measurement of a convergence study.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergencePoint {
    pub h: f64,
    /// Sample mean of the functional.
    pub mean: f64,
    pub stderr: f64,
    /// Closed-form moment the mean is compared against.
    pub exact: f64,
    /// Signed error, exact − mean.
    pub error: f64,
    /// Trapezoidal runs only.
    pub degenerate_fraction: Option<f64>,
    pub n_paths: u64,
    /// Seed this point's ensemble actually used.
    pub seed: u64,
}

/// Result of a log-log least-squares fit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    /// ln of the error constant: fitted |error| ≈ exp(intercept)·h^slope.
    pub intercept: f64,
    pub r_squared: f64,
    pub n_points: usize,
}

/// Least-squares line through (ln h, ln e). Every h must be positive,
/// finite and not all equal; every e strictly positive and finite.
pub fn fit_slope(points: &[(f64, f64)]) -> Result<SlopeFit, AnalysisError> {
    if points.len() < 2 {
        return Err(AnalysisError::TooFewPoints {
            min: 2,
            got: points.len(),
        });
    }
    for &(h, e) in points {
        if !h.is_finite() || h <= 0.0 {
            return Err(AnalysisError::BadStepSize { h });
        }
        if !e.is_finite() || e <= 0.0 {
            return Err(AnalysisError::NonpositiveError { h, value: e });
        }
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let xbar = xs.iter().sum::<f64>() / n;
    let ybar = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    if sxx == 0.0 {
        return Err(AnalysisError::BadStepSize { h: points[0].0 });
    }
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - xbar) * (y - ybar))
        .sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - ybar) * (y - ybar)).sum();
    let r_squared = if ss_tot == 0.0 {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(SlopeFit {
        slope,
        intercept,
        r_squared,
        n_points: points.len(),
    })
}

/// Sampling gate: a point enters a fit only if |error| ≥ 2·stderr, so
/// the fitted decay is discretization bias, not Monte-Carlo noise.
/// Returns the offenders (empty slice means the gate is clean).
pub fn gate_offenders(points: &[ConvergencePoint]) -> Vec<GatedPoint> {
    points
        .iter()
        .filter(|p| p.error.abs() < 2.0 * p.stderr)
        .map(|p| GatedPoint {
            h: p.h,
            abs_error: p.error.abs(),
            stderr: p.stderr,
        })
        .collect()
}

/// Applies the sampling gate, then fits |error| against h.
pub fn gate_and_fit(points: &[ConvergencePoint]) -> Result<SlopeFit, AnalysisError> {
    let offenders = gate_offenders(points);
    if !offenders.is_empty() {
        return Err(AnalysisError::SamplingDominated(offenders));
    }
    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.h, p.error.abs())).collect();
    fit_slope(&pairs)
}

/// Runs one ensemble per step size. Point i uses the seed derived from
/// (master_seed, i), so grids share nothing and adding a step size never
/// perturbs the others.
#[allow(clippy::too_many_arguments)]
pub fn convergence_points(
    system: &SdeSystem,
    scheme: SchemeChoice,
    h_list: &[f64],
    t_final: f64,
    n_paths: u64,
    master_seed: u64,
    functional: Functional,
    oracle: MomentOracle,
) -> Result<Vec<ConvergencePoint>, StudyError> {
    let mut out = Vec::with_capacity(h_list.len());
    let exact = oracle(t_final, system.initial());
    for (i, &h) in h_list.iter().enumerate() {
        let seed = derive_seed(master_seed, i as u64);
        let spec = EnsembleSpec {
            system: system.clone(),
            scheme,
            h,
            t_final,
            n_paths,
            master_seed: seed,
            functional,
        };
        let est = run_ensemble(&spec)?;
        let (error, stderr) = estimate_error(&est, exact);
        out.push(ConvergencePoint {
            h,
            mean: est.mean,
            stderr,
            exact,
            error,
            degenerate_fraction: est.degenerate_fraction,
            n_paths: est.n_paths,
            seed,
        });
    }
    Ok(out)
}

/// Full study: points, gate, fit.
#[allow(clippy::too_many_arguments)]
pub fn convergence_study(
    system: &SdeSystem,
    scheme: SchemeChoice,
    h_list: &[f64],
    t_final: f64,
    n_paths: u64,
    master_seed: u64,
    functional: Functional,
    oracle: MomentOracle,
) -> Result<(Vec<ConvergencePoint>, SlopeFit), StudyError> {
    let points = convergence_points(
        system,
        scheme,
        h_list,
        t_final,
        n_paths,
        master_seed,
        functional,
        oracle,
    )?;
    let fit = gate_and_fit(&points)?;
    Ok((points, fit))
}

/// Convergence study of the trapezoidal scheme at each θ. Every θ reuses
/// the same master seed, so point i sees the same driving noise across
/// the sweep and the slopes differ only through the scheme.
#[allow(clippy::too_many_arguments)]
pub fn theta_convergence_sweep(
    system: &SdeSystem,
    thetas: &[f64],
    h_list: &[f64],
    t_final: f64,
    n_paths: u64,
    master_seed: u64,
    functional: Functional,
    oracle: MomentOracle,
) -> Result<Vec<(f64, Vec<ConvergencePoint>, SlopeFit)>, StudyError> {
    let mut out = Vec::with_capacity(thetas.len());
    for &theta in thetas {
        let scheme = SchemeChoice::WeakTrapezoidal(make_theta_scheme(theta)?);
        let (points, fit) = convergence_study(
            system,
            scheme,
            h_list,
            t_final,
            n_paths,
            master_seed,
            functional,
            oracle,
        )?;
        out.push((theta, points, fit));
    }
    Ok(out)
}
