#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::SpgpError;

/// Squared-exponential kernel with one lengthscale per input dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// Lengthscale per input axis (m).
    pub lengthscale: [f64; 2],
    /// Prior variance of each velocity component ((m/s)^2).
    pub signal_variance: f64,
    /// Observation noise variance of the finite-difference velocities ((m/s)^2).
    pub noise_variance: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self { lengthscale: [0.5, 0.5], signal_variance: 0.5, noise_variance: 0.01 }
    }
}

impl KernelParams {
    pub fn validate(&self) -> Result<(), SpgpError> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if ok(self.lengthscale[0]) && ok(self.lengthscale[1]) && ok(self.signal_variance) && ok(self.noise_variance) {
            Ok(())
        } else {
            Err(SpgpError::InvalidKernel(*self))
        }
    }

    /// Diagonal jitter added before factorizations.
    pub fn jitter(&self) -> f64 {
        1e-8 * self.signal_variance
    }

    pub(crate) fn inverse_sq_lengthscales(&self) -> [f64; 2] {
        [1.0 / (self.lengthscale[0] * self.lengthscale[0]), 1.0 / (self.lengthscale[1] * self.lengthscale[1])]
    }

    /// `k(a, b) = s^2 exp(-1/2 sum_d (a_d - b_d)^2 / l_d^2)`.
    #[inline]
    pub fn eval(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        let inv = self.inverse_sq_lengthscales();
        self.eval_scaled(inv, a, b)
    }

    #[inline]
    pub(crate) fn eval_scaled(&self, inv: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
        let dx = a[0] - b[0];
        let dy = a[1] - b[1];
        self.signal_variance * (-0.5 * (dx * dx * inv[0] + dy * dy * inv[1])).exp()
    }

    pub(crate) fn to_log(self) -> [f64; 4] {
        [
            self.lengthscale[0].ln(),
            self.lengthscale[1].ln(),
            self.signal_variance.ln(),
            self.noise_variance.ln(),
        ]
    }

    pub(crate) fn from_log(p: [f64; 4]) -> Self {
        Self {
            lengthscale: [p[0].exp(), p[1].exp()],
            signal_variance: p[2].exp(),
            noise_variance: p[3].exp(),
        }
    }
}
