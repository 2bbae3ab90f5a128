//! Flow functions: Gaussian-process regression from receiver pose to velocity.
//!
//! Each stored receiver trajectory gets its own [`FlowModel`]. Both velocity
//! components are modeled as independent GPs that share one kernel and one
//! inducing set, so their predictive variances coincide and the scalar
//! variance reported by [`FlowModel::predict`] is that shared value.
//!
//! With an inducing ratio below one the model is the fully independent
//! training conditional (FITC) approximation on a time-uniform subset of the
//! training poses. At ratio one it is the exact GP.

mod hyper;
mod kernel;

pub use hyper::{fit_kernel, log_marginal_likelihood, HyperFitConfig};
pub use kernel::KernelParams;

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{ReceiverPose, Trajectory};
use crate::linalg::{Cholesky, LinalgError};

/// Variances below this are treated as a numerical inconsistency.
pub const NEGATIVE_VARIANCE_TOLERANCE: f64 = -1e-10;
const JITTER_TRIES: usize = 6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpgpError {
    #[error("inducing ratio must lie in (0, 1], got {0}")]
    InvalidRatio(f64),
    #[error("trajectory has {0} samples, at least 2 are required")]
    TooShort(usize),
    #[error("kernel parameters must be positive and finite: {0:?}")]
    InvalidKernel(KernelParams),
    #[error("inputs and targets differ in length ({inputs} vs {targets})")]
    LengthMismatch { inputs: usize, targets: usize },
    #[error("kernel matrix factorization failed: {0}")]
    Linalg(#[from] LinalgError),
    #[error("predictive variance {0:e} is negative beyond round-off")]
    NegativeVariance(f64),
    #[error("no trajectories to fit hyperparameters on")]
    NoData,
}

/// Velocities by central differences inside, one-sided differences at the ends.
pub fn finite_differences(times: &[f64], poses: &[ReceiverPose]) -> Result<Vec<[f64; 2]>, SpgpError> {
    let n = poses.len();
    if n < 2 || times.len() != n {
        return Err(SpgpError::TooShort(n));
    }
    Ok((0..n).map(|i| difference_at(times, poses, i)).collect())
}

/// Velocity at sample `i` as [`finite_differences`] computes it.
#[inline]
pub fn difference_at(times: &[f64], poses: &[ReceiverPose], i: usize) -> [f64; 2] {
    let n = poses.len();
    let (a, b) = if i == 0 {
        (0, 1)
    } else if i == n - 1 {
        (n - 2, n - 1)
    } else {
        (i - 1, i + 1)
    };
    let dt = times[b] - times[a];
    [(poses[b].x - poses[a].x) / dt, (poses[b].y - poses[a].y) / dt]
}

pub fn finite_difference_velocities(traj: &Trajectory<ReceiverPose>) -> Result<Vec<[f64; 2]>, SpgpError> {
    let times: Vec<f64> = traj.times().collect();
    let poses: Vec<ReceiverPose> = traj.poses().collect();
    finite_differences(&times, &poses)
}

/// Time indices of `max(2, round(ratio n))` inducing points spread uniformly
/// over `0..n`.
pub fn inducing_indices(n: usize, ratio: f64) -> Result<Vec<usize>, SpgpError> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(SpgpError::InvalidRatio(ratio));
    }
    if n < 2 {
        return Err(SpgpError::TooShort(n));
    }
    let m = ((ratio * n as f64).round() as usize).clamp(2, n);
    let step = (n - 1) as f64 / (m - 1) as f64;
    let mut idx: Vec<usize> = (0..m).map(|j| ((j as f64 * step).round() as usize).min(n - 1)).collect();
    idx.dedup();
    Ok(idx)
}

/// Predictive mean velocity and scalar variance of a flow function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowPrediction {
    pub mean: [f64; 2],
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum Factors {
    /// `chol = chol(K + (noise + jitter) I)`.
    Exact { chol: Cholesky },
    /// `chol_mm = chol(Kmm + jitter I)`, `chol_a = chol(I + V Lambda^-1 V^T)`
    /// with `V = chol_mm^-1 Kmn`.
    Fitc { chol_mm: Cholesky, chol_a: Cholesky },
}

/// Fitted flow function of one receiver trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowModel {
    inputs: Vec<[f64; 2]>,
    targets: Vec<[f64; 2]>,
    inducing: Vec<usize>,
    basis: Vec<[f64; 2]>,
    inducing_ratio: f64,
    kernel: KernelParams,
    inv_ls2: [f64; 2],
    /// Weights such that `mean_d(x) = k_basis(x)^T weights[d]`.
    weights: [Vec<f64>; 2],
    factors: Factors,
}

/// Serializable summary used in reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSummary {
    pub n_inputs: usize,
    pub n_inducing: usize,
    pub inducing_ratio: f64,
    pub kernel: KernelParams,
}

impl AsRef<FlowModel> for FlowModel {
    fn as_ref(&self) -> &FlowModel {
        self
    }
}

impl FlowModel {
    pub fn fit(traj: &Trajectory<ReceiverPose>, inducing_ratio: f64, kernel: KernelParams) -> Result<Self, SpgpError> {
        let inputs: Vec<[f64; 2]> = traj.poses().map(|p| [p.x, p.y]).collect();
        let targets = finite_difference_velocities(traj)?;
        Self::fit_points(inputs, targets, inducing_ratio, kernel)
    }

    /// Fit on explicit `(pose, velocity)` samples taken in time order.
    pub fn fit_points(
        inputs: Vec<[f64; 2]>,
        targets: Vec<[f64; 2]>,
        inducing_ratio: f64,
        kernel: KernelParams,
    ) -> Result<Self, SpgpError> {
        kernel.validate()?;
        if inputs.len() != targets.len() {
            return Err(SpgpError::LengthMismatch { inputs: inputs.len(), targets: targets.len() });
        }
        let n = inputs.len();
        let inducing = inducing_indices(n, inducing_ratio)?;
        let inv_ls2 = kernel.inverse_sq_lengthscales();
        let k = |a: [f64; 2], b: [f64; 2]| kernel.eval_scaled(inv_ls2, a, b);
        let jitter = kernel.jitter();

        if inducing.len() == n {
            // the noise term already regularizes; jitter only if that is not enough
            let noise = kernel.noise_variance;
            let entry = |i: usize, j: usize| k(inputs[i], inputs[j]) + if i == j { noise } else { 0.0 };
            let chol = match Cholesky::factor(n, entry) {
                Ok(c) => c,
                Err(_) => Cholesky::factor_with_jitter(n, entry, jitter, JITTER_TRIES)?.0,
            };
            let weights = [0, 1].map(|d| {
                let mut w: Vec<f64> = targets.iter().map(|t| t[d]).collect();
                chol.solve_in_place(&mut w);
                w
            });
            return Ok(Self {
                basis: inputs.clone(),
                inputs,
                targets,
                inducing,
                inducing_ratio,
                kernel,
                inv_ls2,
                weights,
                factors: Factors::Exact { chol },
            });
        }

        let basis: Vec<[f64; 2]> = inducing.iter().map(|&i| inputs[i]).collect();
        let m = basis.len();
        let (chol_mm, _) = Cholesky::factor_with_jitter(m, |i, j| k(basis[i], basis[j]), jitter, JITTER_TRIES)?;

        // V = Lm^-1 Kmn, stored column by column (one column per training input).
        let mut v_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut lambda = Vec::with_capacity(n);
        for x in &inputs {
            let mut col: Vec<f64> = basis.iter().map(|b| k(*b, *x)).collect();
            chol_mm.solve_lower_in_place(&mut col);
            let q: f64 = col.iter().map(|c| c * c).sum();
            lambda.push((kernel.signal_variance - q).max(0.0) + kernel.noise_variance);
            v_cols.push(col);
        }

        // A = I + V Lambda^-1 V^T
        let mut a = vec![0.0; m * m];
        for (col, lam) in v_cols.iter().zip(&lambda) {
            let inv = 1.0 / lam;
            for i in 0..m {
                let ci = col[i] * inv;
                if ci == 0.0 {
                    continue;
                }
                for j in 0..=i {
                    a[i * m + j] += ci * col[j];
                }
            }
        }
        for i in 0..m {
            a[i * m + i] += 1.0;
        }
        let chol_a = Cholesky::factor(m, |i, j| a[i * m + j])?;

        // weights = Lm^-T A^-1 V Lambda^-1 y
        let weights = [0, 1].map(|d| {
            let mut r = vec![0.0; m];
            for ((col, lam), t) in v_cols.iter().zip(&lambda).zip(&targets) {
                let s = t[d] / lam;
                for (ri, ci) in r.iter_mut().zip(col) {
                    *ri += ci * s;
                }
            }
            chol_a.solve_in_place(&mut r);
            chol_mm.solve_upper_in_place(&mut r);
            r
        });

        Ok(Self {
            inputs,
            targets,
            inducing,
            basis,
            inducing_ratio,
            kernel,
            inv_ls2,
            weights,
            factors: Factors::Fitc { chol_mm, chol_a },
        })
    }

    /// Predictive mean velocity and latent variance at `query`.
    pub fn predict(&self, query: ReceiverPose) -> Result<FlowPrediction, SpgpError> {
        let q = [query.x, query.y];
        let mut kq: Vec<f64> = self.basis.iter().map(|b| self.kernel.eval_scaled(self.inv_ls2, *b, q)).collect();
        let mut mean = [0.0; 2];
        for (d, w) in self.weights.iter().enumerate() {
            mean[d] = kq.iter().zip(w).map(|(a, b)| a * b).fold(0.0, |s, v| s + v);
        }
        let raw = match &self.factors {
            Factors::Exact { chol } => {
                chol.solve_lower_in_place(&mut kq);
                self.kernel.signal_variance - kq.iter().map(|v| v * v).fold(0.0, |s, v| s + v)
            }
            Factors::Fitc { chol_mm, chol_a } => {
                chol_mm.solve_lower_in_place(&mut kq);
                let prior_explained = kq.iter().map(|v| v * v).fold(0.0, |s, v| s + v);
                chol_a.solve_lower_in_place(&mut kq);
                let restored = kq.iter().map(|v| v * v).fold(0.0, |s, v| s + v);
                self.kernel.signal_variance - prior_explained + restored
            }
        };
        if raw < NEGATIVE_VARIANCE_TOLERANCE * self.kernel.signal_variance.max(1.0) {
            return Err(SpgpError::NegativeVariance(raw));
        }
        Ok(FlowPrediction { mean, variance: raw.max(0.0) })
    }

    pub fn inputs(&self) -> &[[f64; 2]] {
        &self.inputs
    }

    pub fn targets(&self) -> &[[f64; 2]] {
        &self.targets
    }

    pub fn inducing_indices(&self) -> &[usize] {
        &self.inducing
    }

    pub fn inducing_points(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        self.inducing.iter().map(|&i| self.inputs[i])
    }

    pub fn inducing_ratio(&self) -> f64 {
        self.inducing_ratio
    }

    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.factors, Factors::Exact { .. })
    }

    pub fn summary(&self) -> FlowSummary {
        FlowSummary {
            n_inputs: self.inputs.len(),
            n_inducing: self.inducing.len(),
            inducing_ratio: self.inducing_ratio,
            kernel: self.kernel,
        }
    }
}
