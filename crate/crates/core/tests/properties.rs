//! Structural invariants checked over randomized inputs.

use proptest::prelude::*;
use std::sync::Arc;

use wtrap_core::model::{augment_time, TimeChannel};
use wtrap_core::schemes::{euler_step, midpoint_drift_step, wt_step};
use wtrap_core::{fit_slope, make_theta_scheme, Functional, NoiseChannel, SdeSystem};

fn const_drift(dim: usize, c: f64) -> SdeSystem {
    SdeSystem::new(
        "const-drift",
        dim,
        vec![0.0; dim],
        Arc::new(move |_: &[f64], out: &mut [f64]| out.fill(c)),
        vec![NoiseChannel::new(Arc::new(|_| 1.0), {
            let mut d = vec![0.0; dim];
            d[0] = 1.0;
            d
        })],
    )
    .unwrap()
}

proptest! {
    /// α₁ − α₂ = 1 and α₂/α₁ = 1 − 2θ + 2θ² for every admissible θ.
    #[test]
    fn alpha_identities(theta in 0.001f64..0.999) {
        let s = make_theta_scheme(theta).unwrap();
        prop_assert!((s.alpha1() - s.alpha2() - 1.0).abs() <= 1e-12);
        let direct = 1.0 / (2.0 * theta * (1.0 - theta));
        prop_assert!((s.alpha1() - direct).abs() <= 1e-12 * direct.abs());
        let ratio = s.alpha2() / s.alpha1();
        let threshold = 1.0 - 2.0 * theta + 2.0 * theta * theta;
        prop_assert!((ratio - threshold).abs() <= 1e-12);
        prop_assert!((s.degenerate_threshold() - threshold).abs() == 0.0);
    }

    /// With a constant rate the corrector amplitude collapses to that
    /// same rate (α₁σ² − α₂σ² = σ²), so the two-step map adds exactly
    /// c·h drift and σ(η₁√(θh) + η₂√((1−θ)h)) noise, for every θ.
    #[test]
    fn constant_coefficients_make_the_step_exact(
        theta in 0.01f64..0.99,
        h in 1e-4f64..1.0,
        x0 in -5.0f64..5.0,
        c in -3.0f64..3.0,
        sigma in 0.01f64..10.0,
        eta1 in -4.0f64..4.0,
        eta2 in -4.0f64..4.0,
    ) {
        let sys = SdeSystem::new(
            "affine",
            1,
            vec![x0],
            Arc::new(move |_: &[f64], out: &mut [f64]| out[0] = c),
            vec![NoiseChannel::new(Arc::new(move |_| sigma), vec![1.0])],
        ).unwrap();
        let scheme = make_theta_scheme(theta).unwrap();
        let r = wt_step(&sys, &[x0], h, scheme, &[eta1], &[eta2]).unwrap();
        let expected = x0
            + c * h
            + sigma * (eta1 * (theta * h).sqrt() + eta2 * ((1.0 - theta) * h).sqrt());
        prop_assert!(!r.degenerate[0]);
        prop_assert!(
            (r.state[0] - expected).abs() <= 1e-13 * expected.abs().max(1.0),
            "got {} expected {}", r.state[0], expected
        );
    }

    /// Without noise the two-step map reduces to a trapezoid-like drift
    /// rule: x + h[(1/2θ)·b(y*) + (1 − 1/2θ)·b(x)] with y* = x + b(x)θh.
    #[test]
    fn drift_only_step_is_a_fractional_trapezoid(
        theta in 0.02f64..0.98,
        h in 1e-3f64..0.5,
        x in prop::array::uniform2(-3.0f64..3.0),
        lin in prop::array::uniform4(-1.0f64..1.0),
        quad in prop::array::uniform2(-0.2f64..0.2),
    ) {
        let [a, b, c, d] = lin;
        let [q1, q2] = quad;
        let drift = move |x: &[f64], out: &mut [f64]| {
            out[0] = a * x[0] + b * x[1] + q1 * x[0] * x[0];
            out[1] = c * x[0] + d * x[1] + q2 * x[1] * x[1];
        };
        let sys = SdeSystem::new("poly", 2, vec![0.0, 0.0], Arc::new(drift), vec![]).unwrap();
        let scheme = make_theta_scheme(theta).unwrap();
        let r = wt_step(&sys, &x, h, scheme, &[], &[]).unwrap();

        let mut bx = [0.0; 2];
        drift(&x, &mut bx);
        let ystar = [x[0] + bx[0] * theta * h, x[1] + bx[1] * theta * h];
        let mut by = [0.0; 2];
        drift(&ystar, &mut by);
        let w = 1.0 / (2.0 * theta);
        for i in 0..2 {
            let expected = x[i] + h * (w * by[i] + (1.0 - w) * bx[i]);
            prop_assert!(
                (r.state[i] - expected).abs() <= 1e-12 * expected.abs().max(1.0),
                "coord {i}: got {} expected {}", r.state[i], expected
            );
        }
    }

    /// The clamp predicate α₁σ²(y*) − α₂σ²(x) < 0 is the same test as
    /// σ²(y*) < (1 − 2θ + 2θ²)·σ²(x), away from the exact boundary.
    #[test]
    fn clamp_predicate_matches_threshold_form(
        theta in 0.01f64..0.99,
        rx in 0.01f64..10.0,
        factor in 0.0f64..2.0,
    ) {
        prop_assume!((factor - 1.0).abs() > 1e-6);
        let s = make_theta_scheme(theta).unwrap();
        let g = s.degenerate_threshold();
        let ry2 = factor * g * rx * rx;
        let arg = s.alpha1() * ry2 - s.alpha2() * (rx * rx);
        prop_assert_eq!(arg < 0.0, factor < 1.0);
        prop_assert_eq!(ry2 < g * rx * rx, factor < 1.0);
    }

    /// Slope fits are invariant under rescaling h, rescaling the errors
    /// (intercept shifts by ln c), and point order.
    #[test]
    fn fit_invariances(
        scale_h in 0.01f64..100.0,
        scale_e in 0.01f64..100.0,
        p in 0.5f64..3.0,
        c in 0.1f64..10.0,
        noise in prop::collection::vec(-0.3f64..0.3, 5),
    ) {
        let hs: Vec<f64> = (1..=5).map(|i| 0.5f64.powi(i)).collect();
        let pts: Vec<(f64, f64)> = hs.iter().zip(&noise)
            .map(|(&h, &d)| (h, c * h.powf(p) * (1.0 + d)))
            .collect();
        let base = fit_slope(&pts).unwrap();

        let scaled_h: Vec<(f64, f64)> = pts.iter().map(|&(h, e)| (h * scale_h, e)).collect();
        let fit = fit_slope(&scaled_h).unwrap();
        prop_assert!((fit.slope - base.slope).abs() <= 1e-9);

        let scaled_e: Vec<(f64, f64)> = pts.iter().map(|&(h, e)| (h, e * scale_e)).collect();
        let fit = fit_slope(&scaled_e).unwrap();
        prop_assert!((fit.slope - base.slope).abs() <= 1e-9);
        prop_assert!((fit.intercept - base.intercept - scale_e.ln()).abs() <= 1e-9);

        let mut rev = pts.clone();
        rev.reverse();
        let fit = fit_slope(&rev).unwrap();
        prop_assert!((fit.slope - base.slope).abs() <= 1e-12);
        prop_assert!((fit.r_squared - base.r_squared).abs() <= 1e-12);
    }

    /// Autonomizing a time-dependent system appends exactly one clock
    /// coordinate: unit drift, zero diffusion, rates reading the clock.
    #[test]
    fn time_augmentation_projects_cleanly(
        coeffs in prop::array::uniform4(-2.0f64..2.0),
        rho in 0.1f64..3.0,
        x in prop::array::uniform2(-4.0f64..4.0),
        clock in 0.0f64..5.0,
        t0 in 0.0f64..2.0,
    ) {
        let [a, b, c, d] = coeffs;
        let sys = augment_time(
            "aug",
            2,
            vec![1.0, -1.0],
            t0,
            Arc::new(move |_t: f64, x: &[f64], out: &mut [f64]| {
                out[0] = a * x[0] + b * x[1];
                out[1] = c * x[0] + d * x[1];
            }),
            vec![TimeChannel {
                rate: Arc::new(move |t: f64, _x: &[f64]| rho * (t + 1.0)),
                direction: vec![1.0, 0.0],
            }],
        )
        .unwrap();

        prop_assert_eq!(sys.dim(), 3);
        prop_assert_eq!(sys.observable_dim(), 2);
        prop_assert_eq!(sys.initial(), &[1.0, -1.0, t0]);

        let state = [x[0], x[1], clock];
        let out = sys.evaluate_drift(&state).unwrap();
        prop_assert_eq!(out[0].to_bits(), (a * x[0] + b * x[1]).to_bits());
        prop_assert_eq!(out[1].to_bits(), (c * x[0] + d * x[1]).to_bits());
        prop_assert_eq!(out[2], 1.0);

        let rate = sys.evaluate_rate(&state, 0).unwrap();
        prop_assert_eq!(rate.to_bits(), (rho * (clock + 1.0)).to_bits());
        prop_assert_eq!(sys.channels()[0].direction(), &[1.0, 0.0, 0.0]);

        // the clock never leaks into observables
        let f = Functional::NormSq.apply(&state, sys.observable_dim());
        prop_assert_eq!(f.to_bits(), (x[0] * x[0] + x[1] * x[1]).to_bits());
    }

    /// On linear drift with no noise the two-step map collapses to
    /// 1 + h + h²/2 regardless of θ.
    #[test]
    fn drift_only_linear_map_is_theta_independent(
        theta in 0.02f64..0.98,
        h in 1e-3f64..0.5,
        x in -5.0f64..5.0,
    ) {
        let sys = SdeSystem::new(
            "lin",
            1,
            vec![1.0],
            Arc::new(|x: &[f64], out: &mut [f64]| out[0] = x[0]),
            vec![],
        ).unwrap();
        let scheme = make_theta_scheme(theta).unwrap();
        let r = wt_step(&sys, &[x], h, scheme, &[], &[]).unwrap();
        let expected = x * (1.0 + h + 0.5 * h * h);
        prop_assert!(
            (r.state[0] - expected).abs() <= 1e-13 * expected.abs().max(1.0),
            "theta {theta}: got {} expected {}", r.state[0], expected
        );
    }

    /// With zero drift the midpoint predictor does nothing: the map is
    /// Euler's, bit for bit.
    #[test]
    fn midpoint_equals_euler_without_drift(
        x in prop::array::uniform2(-4.0f64..4.0),
        h in 1e-3f64..1.0,
        etas in prop::array::uniform2(-3.0f64..3.0),
        r1 in 0.1f64..2.0,
        r2 in 0.1f64..2.0,
    ) {
        let sys = SdeSystem::new(
            "driftless",
            2,
            vec![0.0, 0.0],
            Arc::new(|_: &[f64], out: &mut [f64]| out.fill(0.0)),
            vec![
                NoiseChannel::new(Arc::new(move |x: &[f64]| r1 * (1.0 + x[1] * x[1])), vec![1.0, 0.5]),
                NoiseChannel::new(Arc::new(move |x: &[f64]| r2 * (1.0 + x[0] * x[0])), vec![0.0, 1.0]),
            ],
        ).unwrap();
        let a = euler_step(&sys, &x, h, &etas).unwrap();
        let b = midpoint_drift_step(&sys, &x, h, &etas).unwrap();
        for i in 0..2 {
            prop_assert_eq!(a[i].to_bits(), b[i].to_bits());
        }
    }
}

/// A channel whose rate is identically zero produces arg = 0 exactly:
/// by the strict-inequality convention that is a tie, not a clamp.
#[test]
fn zero_rate_channel_is_a_tie_not_a_clamp() {
    let sys = SdeSystem::new(
        "flatline",
        1,
        vec![2.0],
        Arc::new(|x: &[f64], out: &mut [f64]| out[0] = -x[0]),
        vec![NoiseChannel::new(Arc::new(|_| 0.0), vec![1.0])],
    )
    .unwrap();
    let scheme = make_theta_scheme(0.37).unwrap();
    let r = wt_step(&sys, &[2.0], 0.1, scheme, &[1.3], &[-0.4]).unwrap();
    assert!(!r.degenerate[0], "zero-rate tie must not count as a clamp");
}

/// Constant-drift systems integrate exactly at one step for any θ.
#[test]
fn constant_drift_one_step_is_exact() {
    for &theta in &[0.1, 0.25, 0.5, 0.9] {
        let sys = const_drift(2, 1.5);
        let scheme = make_theta_scheme(theta).unwrap();
        let r = wt_step(&sys, &[0.0, 0.0], 0.5, scheme, &[0.0], &[0.0]).unwrap();
        approx::assert_relative_eq!(r.state[0], 0.75, max_relative = 1e-14);
        approx::assert_relative_eq!(r.state[1], 0.75, max_relative = 1e-14);
    }
}
