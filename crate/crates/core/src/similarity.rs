//! Trajectory distance and similarity between an observed receiver prefix and
//! a stored flow function.
//!
//! For an observation `x_1..x_tc` with finite-difference velocities `v_t`:
//!
//! ```text
//! d = 1/tc * sum_t ( kappa * d_cos(v_t, mu_k(x_t)) + sigma_k^2(x_t) )
//! sim = exp(-d)
//! ```

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{ReceiverPose, Trajectory};
use crate::spgp::{difference_at, FlowModel, FlowPrediction, SpgpError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimilarityError {
    #[error("observation is empty")]
    EmptyObservation,
    #[error("observation needs matching pose and time sequences")]
    Mismatch,
    #[error("invalid similarity config: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Flow(#[from] SpgpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimilarityConfig {
    /// Weight of the cosine term against the variance term.
    pub kappa: f64,
    /// Velocities slower than this carry no direction (m/s).
    pub min_speed: f64,
    /// Only the most recent `window` samples enter the average; `None` uses
    /// the whole observation.
    pub window: Option<usize>,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        Self { kappa: 1.0, min_speed: 0.05, window: Some(90) }
    }
}

impl SimilarityConfig {
    /// Whole-history averaging.
    pub fn unwindowed(kappa: f64) -> Self {
        Self { kappa, window: None, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), SimilarityError> {
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(SimilarityError::InvalidConfig("kappa must be finite and non-negative"));
        }
        if !(self.min_speed > 0.0) {
            return Err(SimilarityError::InvalidConfig("min_speed must be positive"));
        }
        if self.window == Some(0) {
            return Err(SimilarityError::InvalidConfig("window must be positive"));
        }
        Ok(())
    }

    /// First sample index that enters the average for an observation of `len`.
    pub fn window_start(&self, len: usize) -> usize {
        match self.window {
            Some(w) if w < len => len - w,
            _ => 0,
        }
    }
}

/// Observed receiver poses up to the current time, with velocities.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedTrajectory {
    times: Vec<f64>,
    poses: Vec<ReceiverPose>,
    velocities: Vec<[f64; 2]>,
}

impl ObservedTrajectory {
    /// A single pose has no velocity estimate and is treated as standing still.
    pub fn new(times: Vec<f64>, poses: Vec<ReceiverPose>) -> Result<Self, SimilarityError> {
        if poses.is_empty() {
            return Err(SimilarityError::EmptyObservation);
        }
        if times.len() != poses.len() {
            return Err(SimilarityError::Mismatch);
        }
        let velocities = if poses.len() == 1 {
            alloc::vec![[0.0, 0.0]]
        } else {
            (0..poses.len()).map(|i| difference_at(&times, &poses, i)).collect()
        };
        Ok(Self { times, poses, velocities })
    }

    /// The first `len` samples of a recorded trajectory.
    pub fn from_prefix(traj: &Trajectory<ReceiverPose>, len: usize) -> Result<Self, SimilarityError> {
        let len = len.min(traj.len());
        Self::new(traj.times().take(len).collect(), traj.poses().take(len).collect())
    }

    /// Number of observed samples (the current time index).
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn poses(&self) -> &[ReceiverPose] {
        &self.poses
    }

    pub fn velocities(&self) -> &[[f64; 2]] {
        &self.velocities
    }

    pub fn current(&self) -> ReceiverPose {
        self.poses[self.poses.len() - 1]
    }
}

/// `1 - cos(a, b)`, or the neutral `1` when either vector is slower than `min_speed`.
pub fn cosine_distance(a: [f64; 2], b: [f64; 2], min_speed: f64) -> f64 {
    let na = a[0].hypot(a[1]);
    let nb = b[0].hypot(b[1]);
    if na < min_speed || nb < min_speed {
        return 1.0;
    }
    (1.0 - (a[0] * b[0] + a[1] * b[1]) / (na * nb)).clamp(0.0, 2.0)
}

/// Contribution of one observed sample to the trajectory distance.
#[inline]
pub fn step_term(velocity: [f64; 2], flow: &FlowPrediction, config: &SimilarityConfig) -> f64 {
    config.kappa * cosine_distance(velocity, flow.mean, config.min_speed) + flow.variance
}

/// Mean of `terms` in index order.
#[inline]
pub fn mean_of_terms(terms: &[f64]) -> f64 {
    crate::math::sum(terms.iter().copied()) / terms.len() as f64
}

pub fn trajectory_distance(
    obs: &ObservedTrajectory,
    model: &FlowModel,
    config: &SimilarityConfig,
) -> Result<f64, SimilarityError> {
    if obs.is_empty() {
        return Err(SimilarityError::EmptyObservation);
    }
    let start = config.window_start(obs.len());
    let mut terms = Vec::with_capacity(obs.len() - start);
    for t in start..obs.len() {
        let flow = model.predict(obs.poses[t])?;
        terms.push(step_term(obs.velocities[t], &flow, config));
    }
    Ok(mean_of_terms(&terms))
}

#[inline]
pub fn similarity_from_distance(distance: f64) -> f64 {
    (-distance).exp()
}

pub fn similarity(obs: &ObservedTrajectory, model: &FlowModel, config: &SimilarityConfig) -> Result<f64, SimilarityError> {
    trajectory_distance(obs, model, config).map(similarity_from_distance)
}

/// Sort `(index, similarity)` descending with ties going to the lower index.
pub fn sort_ranking(ranking: &mut [(usize, f64)]) {
    ranking.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
}

/// Similarity of `obs` to every model, most similar first.
pub fn rank_all<M: AsRef<FlowModel>>(
    obs: &ObservedTrajectory,
    models: &[M],
    config: &SimilarityConfig,
) -> Result<Vec<(usize, f64)>, SimilarityError> {
    let mut ranking = models
        .iter()
        .enumerate()
        .map(|(i, m)| similarity(obs, m.as_ref(), config).map(|s| (i, s)))
        .collect::<Result<Vec<_>, _>>()?;
    sort_ranking(&mut ranking);
    Ok(ranking)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spgp::KernelParams;
    use alloc::vec;

    #[test]
    fn cosine_distance_cases() {
        let m = 0.05;
        assert_eq!(cosine_distance([1.0, 0.0], [2.0, 0.0], m), 0.0);
        assert_eq!(cosine_distance([1.0, 0.0], [-1.0, 0.0], m), 2.0);
        assert_eq!(cosine_distance([1.0, 0.0], [0.0, 3.0], m), 1.0);
        assert_eq!(cosine_distance([1.0, 0.0], [0.0, 0.0], m), 1.0);
        assert_eq!(cosine_distance([0.01, 0.0], [1.0, 0.0], m), 1.0);
    }

    #[test]
    fn similarity_values() {
        assert_eq!(similarity_from_distance(0.0), 1.0);
        assert!((similarity_from_distance(core::f64::consts::LN_2) - 0.5).abs() < 1e-15);
        let ds = [0.0, 0.1, 0.5, 2.0, 10.0, 700.0];
        for w in ds.windows(2) {
            assert!(similarity_from_distance(w[0]) > similarity_from_distance(w[1]));
        }
        assert!(similarity_from_distance(700.0) > 0.0);
    }

    fn line(n: usize, dir: [f64; 2], offset: [f64; 2]) -> Trajectory<ReceiverPose> {
        Trajectory::from_poses(
            (0..n).map(|i| {
                let t = i as f64 / 30.0;
                ReceiverPose::new(offset[0] + dir[0] * t, offset[1] + dir[1] * t)
            }),
            30.0,
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn kappa_zero_isolates_variance() {
        let k = KernelParams { lengthscale: [0.3, 0.3], signal_variance: 0.5, noise_variance: 1e-3 };
        let model = FlowModel::fit(&line(40, [1.0, 0.0], [0.0, 0.0]), 1.0, k).unwrap();
        let obs = ObservedTrajectory::from_prefix(&line(40, [0.0, 1.0], [0.5, -0.3]), 20).unwrap();
        let cfg = SimilarityConfig::unwindowed(0.0);
        let d = trajectory_distance(&obs, &model, &cfg).unwrap();
        let mean_var: f64 =
            obs.poses().iter().map(|p| model.predict(*p).unwrap().variance).sum::<f64>() / obs.len() as f64;
        assert!((d - mean_var).abs() < 1e-15);
    }

    #[test]
    fn reversed_motion_pays_full_cosine_penalty() {
        let k = KernelParams { lengthscale: [0.3, 0.3], signal_variance: 0.5, noise_variance: 1e-4 };
        let fwd = line(60, [1.0, 0.0], [0.0, 0.0]);
        let model = FlowModel::fit(&fwd, 1.0, k).unwrap();
        let rev = Trajectory::from_poses(fwd.poses().collect::<Vec<_>>().into_iter().rev(), 30.0, 0.0).unwrap();
        let obs = ObservedTrajectory::from_prefix(&rev, 40).unwrap();
        let kappa = 50.0;
        let d = trajectory_distance(&obs, &model, &SimilarityConfig::unwindowed(kappa)).unwrap();
        for (v, p) in obs.velocities().iter().zip(obs.poses()) {
            let mu = model.predict(*p).unwrap().mean;
            assert!((cosine_distance(*v, mu, 0.05) - 2.0).abs() < 1e-6);
        }
        assert!(d >= kappa);
    }

    #[test]
    fn window_limits_history() {
        let cfg = SimilarityConfig { window: Some(5), ..SimilarityConfig::default() };
        assert_eq!(cfg.window_start(3), 0);
        assert_eq!(cfg.window_start(12), 7);
        assert_eq!(SimilarityConfig::unwindowed(1.0).window_start(1000), 0);
        assert!(SimilarityConfig { window: Some(0), ..cfg }.validate().is_err());
        assert!(SimilarityConfig { kappa: -1.0, ..cfg }.validate().is_err());
    }

    #[test]
    fn ranking_ties_and_singletons() {
        let k = KernelParams::default();
        let a = FlowModel::fit(&line(30, [1.0, 0.0], [0.0, 0.0]), 0.5, k).unwrap();
        let obs = ObservedTrajectory::from_prefix(&line(30, [1.0, 0.0], [0.0, 0.0]), 10).unwrap();
        let cfg = SimilarityConfig::default();
        let single = rank_all(&obs, &[&a], &cfg).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].0, 0);
        let twins = rank_all(&obs, &[a.clone(), a], &cfg).unwrap();
        assert_eq!(twins[0].0, 0);
        assert_eq!(twins[0].1, twins[1].1);
        assert!(matches!(ObservedTrajectory::new(vec![], vec![]), Err(SimilarityError::EmptyObservation)));
    }
}
