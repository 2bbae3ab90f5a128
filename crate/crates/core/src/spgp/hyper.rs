//! Type-II maximum likelihood for the shared flow kernel.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;
use core::f64::consts::PI;
use serde::{Deserialize, Serialize};

use super::{finite_difference_velocities, KernelParams, SpgpError};
use crate::dataset::{ReceiverPose, Trajectory};
use crate::linalg::Cholesky;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperFitConfig {
    pub initial: KernelParams,
    pub lengthscale_bounds: [f64; 2],
    pub signal_variance_bounds: [f64; 2],
    pub noise_variance_bounds: [f64; 2],
    pub max_evaluations: usize,
    /// Use every `stride`-th sample of each trajectory.
    pub stride: usize,
}

impl Default for HyperFitConfig {
    fn default() -> Self {
        Self {
            initial: KernelParams::default(),
            lengthscale_bounds: [0.05, 5.0],
            signal_variance_bounds: [1e-3, 10.0],
            noise_variance_bounds: [1e-6, 1.0],
            max_evaluations: 400,
            stride: 1,
        }
    }
}

/// Velocity inputs and targets of one trajectory.
pub type FlowSamples = (Vec<[f64; 2]>, Vec<[f64; 2]>);

/// Sum over trajectories and velocity components of the exact-GP log evidence.
pub fn log_marginal_likelihood(
    samples: &[FlowSamples],
    kernel: &KernelParams,
) -> Result<f64, SpgpError> {
    kernel.validate()?;
    let inv = kernel.inverse_sq_lengthscales();
    let noise = kernel.noise_variance + kernel.jitter();
    let mut total = 0.0;
    for (x, y) in samples {
        let n = x.len();
        let chol = Cholesky::factor(n, |i, j| {
            kernel.eval_scaled(inv, x[i], x[j]) + if i == j { noise } else { 0.0 }
        })?;
        let log_det = chol.log_det();
        for d in 0..2 {
            let mut r: Vec<f64> = y.iter().map(|v| v[d]).collect();
            chol.solve_lower_in_place(&mut r);
            let quad: f64 = r.iter().map(|v| v * v).sum();
            total += -0.5 * quad - 0.5 * log_det - 0.5 * n as f64 * (2.0 * PI).ln();
        }
    }
    Ok(total)
}

/// Nelder-Mead minimization inside a box.
fn nelder_mead<const D: usize>(
    f: impl Fn(&[f64; D]) -> f64,
    start: [f64; D],
    step: f64,
    lower: [f64; D],
    upper: [f64; D],
    max_evals: usize,
) -> [f64; D] {
    let clamp = |p: [f64; D]| {
        let mut q = p;
        for i in 0..D {
            q[i] = q[i].clamp(lower[i], upper[i]);
        }
        q
    };
    let mut simplex: Vec<([f64; D], f64)> = Vec::with_capacity(D + 1);
    let s0 = clamp(start);
    simplex.push((s0, f(&s0)));
    for i in 0..D {
        let mut p = s0;
        p[i] = if p[i] + step <= upper[i] { p[i] + step } else { p[i] - step };
        let p = clamp(p);
        simplex.push((p, f(&p)));
    }
    let mut evals = D + 1;
    let cmp = |a: &([f64; D], f64), b: &([f64; D], f64)| a.1.partial_cmp(&b.1).unwrap_or(core::cmp::Ordering::Equal);
    while evals < max_evals {
        simplex.sort_by(cmp);
        let spread = simplex[D].1 - simplex[0].1;
        if spread.abs() < 1e-9 * (1.0 + simplex[0].1.abs()) {
            break;
        }
        let mut centroid = [0.0; D];
        for (p, _) in &simplex[..D] {
            for i in 0..D {
                centroid[i] += p[i] / D as f64;
            }
        }
        let along = |t: f64| {
            let mut q = [0.0; D];
            for i in 0..D {
                q[i] = centroid[i] + t * (simplex[D].0[i] - centroid[i]);
            }
            clamp(q)
        };
        let r = along(-1.0);
        let fr = f(&r);
        evals += 1;
        if fr < simplex[0].1 {
            let e = along(-2.0);
            let fe = f(&e);
            evals += 1;
            simplex[D] = if fe < fr { (e, fe) } else { (r, fr) };
        } else if fr < simplex[D - 1].1 {
            simplex[D] = (r, fr);
        } else {
            let c = if fr < simplex[D].1 { along(-0.5) } else { along(0.5) };
            let fc = f(&c);
            evals += 1;
            if fc < fr.min(simplex[D].1) {
                simplex[D] = (c, fc);
            } else {
                let best = simplex[0].0;
                for (p, v) in simplex.iter_mut().skip(1) {
                    for i in 0..D {
                        p[i] = best[i] + 0.5 * (p[i] - best[i]);
                    }
                    *v = f(p);
                    evals += 1;
                }
            }
        }
    }
    simplex.sort_by(cmp);
    simplex[0].0
}

/// Fit one kernel shared by all flow models by maximizing the summed evidence
/// of the given trajectories.
pub fn fit_kernel(trajectories: &[&Trajectory<ReceiverPose>], config: &HyperFitConfig) -> Result<KernelParams, SpgpError> {
    if trajectories.is_empty() {
        return Err(SpgpError::NoData);
    }
    let stride = config.stride.max(1);
    let mut samples = Vec::with_capacity(trajectories.len());
    for traj in trajectories {
        let vel = finite_difference_velocities(traj)?;
        let x: Vec<[f64; 2]> = traj.poses().map(|p| [p.x, p.y]).step_by(stride).collect();
        let y: Vec<[f64; 2]> = vel.into_iter().step_by(stride).collect();
        samples.push((x, y));
    }
    let lb = config.lengthscale_bounds;
    let sb = config.signal_variance_bounds;
    let nb = config.noise_variance_bounds;
    let lower = [lb[0].ln(), lb[0].ln(), sb[0].ln(), nb[0].ln()];
    let upper = [lb[1].ln(), lb[1].ln(), sb[1].ln(), nb[1].ln()];
    let objective = |p: &[f64; 4]| match log_marginal_likelihood(&samples, &KernelParams::from_log(*p)) {
        Ok(v) if v.is_finite() => -v,
        _ => f64::INFINITY,
    };
    let best = nelder_mead(objective, config.initial.to_log(), 0.7, lower, upper, config.max_evaluations);
    Ok(KernelParams::from_log(best))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nelder_mead_finds_quadratic_minimum() {
        let f = |p: &[f64; 2]| (p[0] - 1.0).powi(2) + 3.0 * (p[1] + 0.5).powi(2);
        let x = nelder_mead(f, [0.0, 0.0], 0.5, [-5.0; 2], [5.0; 2], 500);
        assert!((x[0] - 1.0).abs() < 1e-3 && (x[1] + 0.5).abs() < 1e-3);
        let clipped = nelder_mead(f, [0.0, 0.0], 0.5, [-5.0, 0.0], [0.5, 5.0], 500);
        assert!((clipped[0] - 0.5).abs() < 1e-3 && clipped[1].abs() < 1e-3);
    }

    #[test]
    fn evidence_prefers_the_generating_noise_level() {
        // zero signal: evidence is maximized near the empirical noise variance
        let x: Vec<[f64; 2]> = (0..40).map(|i| [i as f64, 0.0]).collect();
        let y: Vec<[f64; 2]> = (0..40).map(|i| if i % 2 == 0 { [0.1, -0.1] } else { [-0.1, 0.1] }).collect();
        let data = [(x, y)];
        let ll = |noise: f64| {
            log_marginal_likelihood(
                &data,
                &KernelParams { lengthscale: [0.01, 0.01], signal_variance: 1e-6, noise_variance: noise },
            )
            .unwrap()
        };
        assert!(ll(0.01) > ll(0.001));
        assert!(ll(0.01) > ll(0.1));
    }
}
