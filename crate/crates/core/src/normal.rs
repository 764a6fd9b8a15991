//! Standard normal density, distribution and their ratios, evaluated so that
//! the lower tail stays finite and accurate far beyond where `Φ` underflows.

use libm::erfc;

pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Below this argument the ratio `φ/Φ` is taken from the continued fraction.
const TAIL_CUTOFF: f64 = -5.0;
const CF_DEPTH: usize = 400;

pub fn pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

pub fn cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

pub fn log_cdf(z: f64) -> f64 {
    if z >= TAIL_CUTOFF {
        cdf(z).ln()
    } else {
        // Φ(z) = φ(z) / r(z) with r the inverse Mills ratio.
        let (r, _) = tail_ratio(-z);
        -0.5 * z * z - LN_SQRT_2PI - r.ln()
    }
}

/// Inverse Mills ratio `r(z) = φ(z)/Φ(z)`.
pub fn inverse_mills(z: f64) -> f64 {
    inverse_mills_with_shift(z).0
}

/// Returns `(r(z), z + r(z))`. In the far lower tail `z + r(z)` is a small
/// difference of two large numbers; it is read directly off the continued
/// fraction instead of being formed by subtraction.
pub fn inverse_mills_with_shift(z: f64) -> (f64, f64) {
    if z >= TAIL_CUTOFF {
        let r = pdf(z) / cdf(z);
        (r, z + r)
    } else {
        tail_ratio(-z)
    }
}

/// For `x > 0`, evaluates `1/R(x)` where `R(x) = Φ(-x)/φ(x)` is Mills' ratio,
/// using Laplace's continued fraction
/// `R(x) = 1/(x + 1/(x + 2/(x + 3/(x + ...))))`.
/// Returns `(1/R(x), 1/R(x) - x)`.
fn tail_ratio(x: f64) -> (f64, f64) {
    let mut t = x;
    for n in (2..=CF_DEPTH).rev() {
        t = x + n as f64 / t;
    }
    let shift = 1.0 / t;
    (x + shift, shift)
}

pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}
