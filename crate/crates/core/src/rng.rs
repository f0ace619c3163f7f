//! Deterministic, splittable standard-normal streams.
//!
//! Reproducibility contract: the draws consumed by path i depend only on
//! (master_seed, i), never on scheduling or worker count. Each path owns a
//! ChaCha8 stream whose 32-byte key is expanded from the master seed with
//! SplitMix64 and whose 64-bit stream id is the path index. Within a path,
//! draws are consumed in a fixed documented order (the integrators take
//! them step-major, stage-major, channel-minor), so the sequence is a
//! lexicographic counter over (step, stage, channel).
//!
//! Normal transform (fixed; golden outputs depend on it): one u64 per
//! variate mapped to the open unit interval via u = ((z >> 11) + 0.5)·2⁻⁵³,
//! then inverted through the PPND16 rational approximation of the standard
//! normal quantile (absolute accuracy near 1e-16). The map is symmetric
//! about 0.5, so the draw distribution is exactly centered.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TWO_POW_53: f64 = 9007199254740992.0;

/// SplitMix64 step; the standard 64-bit mixer.
#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Expands a 64-bit master seed into a 256-bit cipher key.
fn master_key(master_seed: u64) -> [u8; 32] {
    let mut state = master_seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key
}

/// Derives the sub-seed for point `index` of a multi-ensemble study.
/// Stable under appending indices, so adding a step size to a grid never
/// perturbs the streams of existing points.
pub fn derive_seed(master_seed: u64, index: u64) -> u64 {
    let mut s = index.wrapping_add(1);
    let mixed = splitmix64(&mut s);
    let mut t = master_seed ^ mixed;
    splitmix64(&mut t)
}

/// An independent N(0,1) stream for one sample path.
pub struct NoiseStream {
    rng: ChaCha8Rng,
    master_seed: u64,
    path_index: u64,
    counter: u64,
}

/// Returns the stream for (master_seed, path_index). Same inputs, same
/// sequence; distinct path indices give statistically independent streams.
pub fn stream_for_path(master_seed: u64, path_index: u64) -> NoiseStream {
    let mut rng = ChaCha8Rng::from_seed(master_key(master_seed));
    rng.set_stream(path_index);
    NoiseStream {
        rng,
        master_seed,
        path_index,
        counter: 0,
    }
}

impl NoiseStream {
    #[inline]
    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    #[inline]
    pub fn path_index(&self) -> u64 {
        self.path_index
    }

    /// Number of variates drawn so far.
    #[inline]
    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Draws one N(0,1) variate, consuming exactly one u64 of cipher output.
    #[inline]
    pub fn next_normal(&mut self) -> f64 {
        let z = self.rng.next_u64();
        self.counter += 1;
        // 53 significant bits, offset by half a step: u ∈ (0,1) strictly,
        // symmetric about 1/2.
        let u = ((z >> 11) as f64 + 0.5) * (1.0 / TWO_POW_53);
        standard_normal_quantile(u)
    }

    /// Fills `out` with independent N(0,1) variates.
    #[inline]
    pub fn fill_normals(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = self.next_normal();
        }
    }

    /// Draws `count` variates; two calls of n and m draws equal one call
    /// of n + m draws.
    pub fn next_normals(&mut self, count: usize) -> Vec<f64> {
        let mut out = vec![0.0; count];
        self.fill_normals(&mut out);
        out
    }
}

#[inline]
fn poly(c: &[f64; 8], x: f64) -> f64 {
    // Horner, highest coefficient first; fixed order keeps results
    // bit-stable across call sites.
    let mut acc = c[7];
    for &ci in c[..7].iter().rev() {
        acc = acc * x + ci;
    }
    acc
}

// PPND16 rational-minimax coefficients (central region and two tails).
const A: [f64; 8] = [
    3.3871328727963666080e0,
    1.3314166789178437745e2,
    1.9715909503065514427e3,
    1.3731693765509461125e4,
    4.5921953931549871457e4,
    6.7265770927008700853e4,
    3.3430575583588128105e4,
    2.5090809287301226727e3,
];
const B: [f64; 8] = [
    1.0,
    4.2313330701600911252e1,
    6.8718700749205790830e2,
    5.3941960214247511077e3,
    2.1213794301586595867e4,
    3.9307895800092710610e4,
    2.8729085735721942674e4,
    5.2264952788528545610e3,
];
const C: [f64; 8] = [
    1.42343711074968357734e0,
    4.63033784615654529590e0,
    5.76949722146069140550e0,
    3.64784832476320460504e0,
    1.27045825245236838258e0,
    2.41780725177450611770e-1,
    2.27238449892691845833e-2,
    7.74545014278341407640e-4,
];
const D: [f64; 8] = [
    1.0,
    2.05319162663775882187e0,
    1.67638483018380384940e0,
    6.89767334985100004550e-1,
    1.48103976427480074590e-1,
    1.51986665636164571966e-2,
    5.47593808499534494600e-4,
    1.05075007164441684324e-9,
];
const E: [f64; 8] = [
    6.65790464350110377720e0,
    5.46378491116411436990e0,
    1.78482653991729133580e0,
    2.96560571828504891230e-1,
    2.65321895265761230930e-2,
    1.24266094738807843860e-3,
    2.71155556874348757815e-5,
    2.01033439929228813265e-7,
];
const F: [f64; 8] = [
    1.0,
    5.99832206555887937690e-1,
    1.36929880922735805310e-1,
    1.48753612908506148525e-2,
    7.86869131145613259100e-4,
    1.84631831751005468180e-5,
    1.42151175831644588870e-7,
    2.04426310338993978564e-15,
];

/// Standard normal quantile Φ⁻¹(p) for p ∈ (0, 1), PPND16 variant.
pub fn standard_normal_quantile(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0, "quantile argument must lie in (0,1)");
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let x = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}
