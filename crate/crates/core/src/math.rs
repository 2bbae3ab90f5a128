//! Scalar helpers: standard normal CDF and its stable logarithm.

#[allow(unused_imports)]
use num_traits::Float;
use core::f64::consts::{PI, SQRT_2};

/// Below this argument `erfc` underflows and the tail series takes over.
const TAIL_CUTOFF: f64 = -37.0;

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF, `Phi(z) = erfc(-z / sqrt 2) / 2`.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

/// Asymptotic Mills-ratio correction `1 - 1/z^2 + 3/z^4 - ...` for `z << 0`.
fn tail_series(z: f64) -> f64 {
    let inv = 1.0 / (z * z);
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..8 {
        term *= -((2 * k - 1) as f64) * inv;
        sum += term;
    }
    sum
}

/// `ln Phi(z)`, finite for every finite `z`.
pub fn log_normal_cdf(z: f64) -> f64 {
    if z < TAIL_CUTOFF {
        -0.5 * z * z - (-z * (2.0 * PI).sqrt()).ln() + tail_series(z).ln()
    } else if z > 5.0 {
        // Phi close to one: ln(1 - q) with q = Phi(-z)
        (-normal_cdf(-z)).ln_1p()
    } else {
        normal_cdf(z).ln()
    }
}

/// Inverse Mills ratio `phi(z) / Phi(z)`, the derivative of `ln Phi`.
pub fn inverse_mills(z: f64) -> f64 {
    if z < TAIL_CUTOFF {
        -z / tail_series(z)
    } else {
        normal_pdf(z) / normal_cdf(z)
    }
}

/// First and second derivatives of `ln Phi(z)`.
pub fn log_normal_cdf_derivs(z: f64) -> (f64, f64) {
    let lambda = inverse_mills(z);
    (lambda, -lambda * (z + lambda))
}

/// Sum in index order with a plain accumulator.
#[inline]
pub fn sum(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, |acc, v| acc + v)
}
