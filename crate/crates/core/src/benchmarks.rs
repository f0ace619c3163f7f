//! Built-in benchmark systems and their closed-form moment oracles.
//!
//! `ou`        2-d linear system with multiplicative noise on one channel
//!             and a small additive channel; the second-moment curve
//!             E X₂(t)² is known in closed form. The multiplicative rate
//!             σ₁(x) = x₁ is unbounded, which steps outside the smoothness
//!             assumptions of the convergence theory; the experiments use
//!             the system as-is and the harness follows them.
//! `talay`     2-d rotation with time-decaying trigonometric rates,
//!             autonomized by a clock coordinate. The rate identity
//!             σ₁² + σ₂² = 13/(1+t) makes E |X(t)|² an ODE with solution
//!             |X(0)|² + 13 ln(1+t).
//! `theta-test` 1-d driftless system with rate √(x²+1), used for the
//!             degenerate-step studies; E X(t)² = (X(0)²+1)eᵗ − 1.
//! `const`     pure drift dX = 1·dt, for exactness and plumbing tests.
//! `linear-1d` deterministic dX = X dt, for deterministic-order tests.

use std::sync::Arc;

use crate::model::{augment_time, Functional, NoiseChannel, SdeSystem, TimeChannel};

/// A closed-form value of E f(X(t)) for a deterministic initial state.
/// Receives the initial state exactly as the system stores it (including
/// a clock coordinate if the system is time-augmented).
pub type MomentOracle = fn(t: f64, initial: &[f64]) -> f64;

/// 2-d linear benchmark: b = (x₁, 0), σ₁(x) = x₁ along (0,1),
/// σ₂ = 1/10 along (1,1). The channels do not commute.
pub fn build_ou() -> SdeSystem {
    SdeSystem::new(
        "ou",
        2,
        vec![1.0, 1.0],
        Arc::new(|x: &[f64], out: &mut [f64]| {
            out[0] = x[0];
            out[1] = 0.0;
        }),
        vec![
            NoiseChannel::new(Arc::new(|x: &[f64]| x[0]), vec![0.0, 1.0]),
            NoiseChannel::new(Arc::new(|_: &[f64]| 0.1), vec![1.0, 1.0]),
        ],
    )
    .expect("ou system construction")
}

/// E X₂(t)² for `ou` started at the deterministic point x0:
/// x₀₂² − x₀₁²/2 + e²ᵗ(200 x₀₁² + 1)/400 + t/200 − 1/400.
pub fn ou_exact_x2sq(t: f64, x0: &[f64]) -> f64 {
    let x1sq = x0[0] * x0[0];
    let x2sq = x0[1] * x0[1];
    x2sq - 0.5 * x1sq + (2.0 * t).exp() * (200.0 * x1sq + 1.0) / 400.0 + t / 200.0 - 1.0 / 400.0
}

/// 2-d rotation with time-decaying rates, autonomized to dimension 3:
/// b = (−x₂, x₁, 1), σ₁ = √((sin²(x₁+x₂)+6)/(t+1)) along (1,0,0),
/// σ₂ = √((cos²(x₁+x₂)+6)/(t+1)) along (0,1,0). Functionals read the
/// first two coordinates only.
pub fn build_talay() -> SdeSystem {
    augment_time(
        "talay",
        2,
        vec![1.0, 1.0],
        0.0,
        Arc::new(|_t: f64, x: &[f64], out: &mut [f64]| {
            out[0] = -x[1];
            out[1] = x[0];
        }),
        vec![
            TimeChannel {
                rate: Arc::new(|t: f64, x: &[f64]| {
                    let s = (x[0] + x[1]).sin();
                    ((s * s + 6.0) / (t + 1.0)).sqrt()
                }),
                direction: vec![1.0, 0.0],
            },
            TimeChannel {
                rate: Arc::new(|t: f64, x: &[f64]| {
                    let c = (x[0] + x[1]).cos();
                    ((c * c + 6.0) / (t + 1.0)).sqrt()
                }),
                direction: vec![0.0, 1.0],
            },
        ],
    )
    .expect("talay system construction")
}

/// E |X(t)|² for `talay`: |X(0)|² + 13 ln(1+t). The clock coordinate of
/// the stored initial state is ignored.
pub fn talay_exact_normsq(t: f64, x0: &[f64]) -> f64 {
    x0[0] * x0[0] + x0[1] * x0[1] + 13.0 * (1.0 + t).ln()
}

/// 1-d driftless system dX = √(X²+1) dW, X(0) = 1.
pub fn build_theta_test() -> SdeSystem {
    SdeSystem::new(
        "theta-test",
        1,
        vec![1.0],
        Arc::new(|_: &[f64], out: &mut [f64]| out[0] = 0.0),
        vec![NoiseChannel::new(
            Arc::new(|x: &[f64]| (x[0] * x[0] + 1.0).sqrt()),
            vec![1.0],
        )],
    )
    .expect("theta-test system construction")
}

/// E X(t)² for `theta-test`: m' = m + 1 gives (X(0)²+1)eᵗ − 1.
pub fn theta_test_exact_x1sq(t: f64, x0: &[f64]) -> f64 {
    (x0[0] * x0[0] + 1.0) * t.exp() - 1.0
}

/// Pure drift dX = 1·dt from X(0) = 0; terminal mean is exactly T.
pub fn build_const() -> SdeSystem {
    SdeSystem::new(
        "const",
        1,
        vec![0.0],
        Arc::new(|_: &[f64], out: &mut [f64]| out[0] = 1.0),
        vec![],
    )
    .expect("const system construction")
}

pub fn const_exact_x1(t: f64, x0: &[f64]) -> f64 {
    x0[0] + t
}

pub fn const_exact_x1sq(t: f64, x0: &[f64]) -> f64 {
    let v = x0[0] + t;
    v * v
}

/// Deterministic dX = X dt from X(0) = 1.
pub fn build_linear_1d() -> SdeSystem {
    SdeSystem::new(
        "linear-1d",
        1,
        vec![1.0],
        Arc::new(|x: &[f64], out: &mut [f64]| out[0] = x[0]),
        vec![],
    )
    .expect("linear-1d system construction")
}

pub fn linear_1d_exact_x1(t: f64, x0: &[f64]) -> f64 {
    x0[0] * t.exp()
}

pub fn linear_1d_exact_x1sq(t: f64, x0: &[f64]) -> f64 {
    let v = x0[0] * t.exp();
    v * v
}

/// Names of the systems addressable by the CLI.
pub const SYSTEM_NAMES: [&str; 5] = ["ou", "talay", "theta-test", "const", "linear-1d"];

/// Builds a built-in system by name.
pub fn lookup_system(name: &str) -> Option<SdeSystem> {
    match name {
        "ou" => Some(build_ou()),
        "talay" => Some(build_talay()),
        "theta-test" => Some(build_theta_test()),
        "const" => Some(build_const()),
        "linear-1d" => Some(build_linear_1d()),
        _ => None,
    }
}

/// Closed-form oracle for (system, functional), where one is known.
pub fn lookup_oracle(system: &str, functional: Functional) -> Option<MomentOracle> {
    match (system, functional) {
        ("ou", Functional::X2Sq) => Some(ou_exact_x2sq),
        ("talay", Functional::NormSq) => Some(talay_exact_normsq),
        ("theta-test", Functional::X1Sq) => Some(theta_test_exact_x1sq),
        ("const", Functional::X1) => Some(const_exact_x1),
        ("const", Functional::X1Sq) => Some(const_exact_x1sq),
        ("linear-1d", Functional::X1) => Some(linear_1d_exact_x1),
        ("linear-1d", Functional::X1Sq) => Some(linear_1d_exact_x1sq),
        _ => None,
    }
}
