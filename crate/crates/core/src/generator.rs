//! Giver trajectory prediction from the most similar stored handovers.
//!
//! At every observation tick the observed receiver prefix is compared with all
//! stored receiver trajectories, the `k_neighbors` most similar are aligned at
//! the stored sample closest to the current receiver pose, and their giver
//! continuations are blended with normalized similarity weights.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::collections::VecDeque;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{GiverPose, HandoverDataset, HandoverPair, ReceiverPose, Trajectory};
use crate::similarity::{
    mean_of_terms, rank_all, similarity_from_distance, sort_ranking, step_term, ObservedTrajectory,
    SimilarityConfig, SimilarityError,
};
use crate::spgp::{difference_at, fit_kernel, FlowModel, FlowPrediction, HyperFitConfig, KernelParams, SpgpError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeneratorError {
    #[error("prediction context has no stored trajectories")]
    NoTrajectories,
    #[error("{pairs} pairs but {models} flow models")]
    ContextMismatch { pairs: usize, models: usize },
    #[error("k_neighbors must be positive")]
    InvalidNeighbors,
    #[error("observation is empty")]
    EmptyObservation,
    #[error("observation timestamps must increase")]
    NonMonotonic,
    #[error("handover complete: no selected trajectory has samples left")]
    HandoverComplete,
    #[error("ensemble buffer is empty")]
    EmptyBuffer,
    #[error("forecast time must be finite and non-negative, got {0}")]
    InvalidForecast(f64),
    #[error("chunk size must be positive and decay in (0, 1]")]
    InvalidEnsemble,
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error(transparent)]
    Flow(#[from] SpgpError),
}

/// How flow models are fitted for a context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowFitConfig {
    pub inducing_ratio: f64,
    /// Trajectories used for the shared kernel fit.
    pub hyper_subsample: usize,
    pub hyper: HyperFitConfig,
}

impl Default for FlowFitConfig {
    fn default() -> Self {
        Self { inducing_ratio: 0.4, hyper_subsample: 32, hyper: HyperFitConfig::default() }
    }
}

/// Fit the shared kernel on evenly spaced pairs of `dataset`.
pub fn learn_shared_kernel(dataset: &HandoverDataset, config: &FlowFitConfig) -> Result<KernelParams, GeneratorError> {
    let n = dataset.len();
    if n == 0 {
        return Err(GeneratorError::NoTrajectories);
    }
    let take = config.hyper_subsample.clamp(1, n);
    let subset: Vec<&Trajectory<ReceiverPose>> =
        (0..take).map(|i| &dataset.pairs()[i * n / take].receiver).collect();
    Ok(fit_kernel(&subset, &config.hyper)?)
}

/// Fit one flow model per pair.
pub fn fit_flow_models(
    pairs: &[HandoverPair],
    inducing_ratio: f64,
    kernel: KernelParams,
) -> Result<Vec<Arc<FlowModel>>, GeneratorError> {
    pairs
        .iter()
        .map(|p| FlowModel::fit(&p.receiver, inducing_ratio, kernel).map(Arc::new).map_err(Into::into))
        .collect()
}

/// Stored handovers with fitted flow models; immutable and cheap to subset.
#[derive(Debug, Clone)]
pub struct PredictionContext {
    pairs: Vec<Arc<HandoverPair>>,
    models: Vec<Arc<FlowModel>>,
    sim_config: SimilarityConfig,
    k_neighbors: usize,
}

impl PredictionContext {
    pub fn new(
        pairs: Vec<Arc<HandoverPair>>,
        models: Vec<Arc<FlowModel>>,
        sim_config: SimilarityConfig,
        k_neighbors: usize,
    ) -> Result<Self, GeneratorError> {
        if pairs.is_empty() {
            return Err(GeneratorError::NoTrajectories);
        }
        if pairs.len() != models.len() {
            return Err(GeneratorError::ContextMismatch { pairs: pairs.len(), models: models.len() });
        }
        if k_neighbors == 0 {
            return Err(GeneratorError::InvalidNeighbors);
        }
        sim_config.validate()?;
        Ok(Self { pairs, models, sim_config, k_neighbors })
    }

    /// Learn the kernel, fit every flow model and build the context.
    pub fn fit(
        dataset: &HandoverDataset,
        fit: &FlowFitConfig,
        sim_config: SimilarityConfig,
        k_neighbors: usize,
    ) -> Result<Self, GeneratorError> {
        let kernel = learn_shared_kernel(dataset, fit)?;
        Self::fit_with_kernel(dataset, fit.inducing_ratio, kernel, sim_config, k_neighbors)
    }

    pub fn fit_with_kernel(
        dataset: &HandoverDataset,
        inducing_ratio: f64,
        kernel: KernelParams,
        sim_config: SimilarityConfig,
        k_neighbors: usize,
    ) -> Result<Self, GeneratorError> {
        let models = fit_flow_models(dataset.pairs(), inducing_ratio, kernel)?;
        let pairs = dataset.pairs().iter().cloned().map(Arc::new).collect();
        Self::new(pairs, models, sim_config, k_neighbors)
    }

    /// Context restricted to the given pair indices (in that order).
    pub fn subset(&self, indices: &[usize]) -> Result<Self, GeneratorError> {
        Self::new(
            indices.iter().map(|&i| self.pairs[i].clone()).collect(),
            indices.iter().map(|&i| self.models[i].clone()).collect(),
            self.sim_config,
            self.k_neighbors,
        )
    }

    pub fn with_similarity(mut self, sim_config: SimilarityConfig) -> Result<Self, GeneratorError> {
        sim_config.validate()?;
        self.sim_config = sim_config;
        Ok(self)
    }

    pub fn with_neighbors(mut self, k_neighbors: usize) -> Result<Self, GeneratorError> {
        if k_neighbors == 0 {
            return Err(GeneratorError::InvalidNeighbors);
        }
        self.k_neighbors = k_neighbors;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[Arc<HandoverPair>] {
        &self.pairs
    }

    pub fn models(&self) -> &[Arc<FlowModel>] {
        &self.models
    }

    pub fn similarity_config(&self) -> &SimilarityConfig {
        &self.sim_config
    }

    /// Neighbor count actually used: `min(k_neighbors, N)`.
    pub fn k_neighbors(&self) -> usize {
        self.k_neighbors.min(self.pairs.len())
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.pairs[0].receiver.sample_rate_hz()
    }
}

/// Index of the stored pose closest to `current`; ties go to the earliest.
pub fn align_time(current: ReceiverPose, stored: &Trajectory<ReceiverPose>) -> usize {
    let mut best = 0;
    let mut best_d2 = f64::INFINITY;
    for (i, p) in stored.poses().enumerate() {
        let dx = p.x - current.x;
        let dy = p.y - current.y;
        let d2 = dx * dx + dy * dy;
        if d2 < best_d2 {
            best_d2 = d2;
            best = i;
        }
    }
    best
}

/// One stored trajectory contributing to a prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceSegment {
    /// Index into the context.
    pub index: usize,
    /// Aligned time index in the stored trajectory.
    pub align: usize,
    pub similarity: f64,
    pub weight: f64,
}

/// Blended giver poses from the current time into the future.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedTrajectory {
    pub poses: Vec<GiverPose>,
    /// Selected trajectories, most similar first.
    pub sources: Vec<SourceSegment>,
}

impl PredictedTrajectory {
    pub fn horizon(&self) -> usize {
        self.poses.len()
    }

    /// Pose at `offset` samples ahead, clamped to the last predicted pose.
    pub fn pose_at(&self, offset: usize) -> GiverPose {
        self.poses[offset.min(self.poses.len() - 1)]
    }

    pub fn weights(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.sources.iter().map(|s| (s.index, s.weight))
    }
}

/// Blend the giver segments of the top-ranked trajectories.
fn blend(ctx: &PredictionContext, current: ReceiverPose, ranking: &[(usize, f64)]) -> Result<PredictedTrajectory, GeneratorError> {
    let selected = &ranking[..ctx.k_neighbors().min(ranking.len())];
    let total: f64 = crate::math::sum(selected.iter().map(|s| s.1));
    let mut sources = Vec::with_capacity(selected.len());
    let mut horizon = usize::MAX;
    for &(index, similarity) in selected {
        let pair = &ctx.pairs[index];
        let align = align_time(current, &pair.receiver);
        horizon = horizon.min(pair.giver.len() - align);
        let weight = if total > 0.0 { similarity / total } else { 1.0 / selected.len() as f64 };
        sources.push(SourceSegment { index, align, similarity, weight });
    }
    if horizon == 0 || sources.is_empty() {
        return Err(GeneratorError::HandoverComplete);
    }
    let mut poses = vec![GiverPose::default(); horizon];
    for src in &sources {
        let giver = &ctx.pairs[src.index].giver;
        for (j, out) in poses.iter_mut().enumerate() {
            let g = giver.pose(src.align + j);
            out.x += src.weight * g.x;
            out.y += src.weight * g.y;
            out.z += src.weight * g.z;
        }
    }
    Ok(PredictedTrajectory { poses, sources })
}

/// Stateless prediction from a full observation.
pub fn predict_trajectory(ctx: &PredictionContext, obs: &ObservedTrajectory) -> Result<PredictedTrajectory, GeneratorError> {
    if obs.is_empty() {
        return Err(GeneratorError::EmptyObservation);
    }
    let ranking = rank_all(obs, &ctx.models, &ctx.sim_config)?;
    blend(ctx, obs.current(), &ranking)
}

/// Streaming predictor for one handover.
///
/// Flow predictions at each observed pose never change once computed, so the
/// session keeps them per model and only evaluates the newest pose on each
/// tick. Its output is identical to [`predict_trajectory`] on the same
/// observation.
#[derive(Debug, Clone)]
pub struct PredictionSession<'a> {
    ctx: &'a PredictionContext,
    times: Vec<f64>,
    poses: Vec<ReceiverPose>,
    velocities: Vec<[f64; 2]>,
    /// Per model: flow prediction at every observed pose.
    flows: Vec<Vec<FlowPrediction>>,
    /// Per model: distance term at every observed pose.
    terms: Vec<Vec<f64>>,
}

impl<'a> PredictionSession<'a> {
    pub fn new(ctx: &'a PredictionContext) -> Self {
        Self {
            ctx,
            times: Vec::new(),
            poses: Vec::new(),
            velocities: Vec::new(),
            flows: vec![Vec::new(); ctx.len()],
            terms: vec![Vec::new(); ctx.len()],
        }
    }

    pub fn context(&self) -> &PredictionContext {
        self.ctx
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Append the next observed receiver pose.
    pub fn push(&mut self, t: f64, pose: ReceiverPose) -> Result<(), GeneratorError> {
        if let Some(&last) = self.times.last() {
            if !(t > last) {
                return Err(GeneratorError::NonMonotonic);
            }
        }
        self.times.push(t);
        self.poses.push(pose);
        let n = self.poses.len();
        // velocities as ObservedTrajectory computes them; only the last two change
        self.velocities.push([0.0, 0.0]);
        let changed = if n == 1 { 0..1 } else { n.saturating_sub(2)..n };
        if n > 1 {
            for i in changed.clone() {
                self.velocities[i] = difference_at(&self.times, &self.poses, i);
            }
        }
        let cfg = self.ctx.sim_config;
        for (k, model) in self.ctx.models.iter().enumerate() {
            let flow = model.predict(pose)?;
            self.flows[k].push(flow);
            self.terms[k].push(0.0);
            for i in changed.clone() {
                self.terms[k][i] = step_term(self.velocities[i], &self.flows[k][i], &cfg);
            }
        }
        Ok(())
    }

    pub fn observation(&self) -> Result<ObservedTrajectory, GeneratorError> {
        Ok(ObservedTrajectory::new(self.times.clone(), self.poses.clone())?)
    }

    /// Similarities of every stored trajectory, most similar first.
    pub fn ranking(&self) -> Result<Vec<(usize, f64)>, GeneratorError> {
        if self.poses.is_empty() {
            return Err(GeneratorError::EmptyObservation);
        }
        let start = self.ctx.sim_config.window_start(self.poses.len());
        let mut ranking: Vec<(usize, f64)> = self
            .terms
            .iter()
            .enumerate()
            .map(|(k, terms)| (k, similarity_from_distance(mean_of_terms(&terms[start..]))))
            .collect();
        sort_ranking(&mut ranking);
        Ok(ranking)
    }

    pub fn predict(&self) -> Result<PredictedTrajectory, GeneratorError> {
        let ranking = self.ranking()?;
        blend(self.ctx, self.poses[self.poses.len() - 1], &ranking)
    }
}

/// Anything that can supply a target pose some samples into the future.
pub trait TargetSource {
    fn target_at_offset(&self, offset: usize) -> Result<GiverPose, GeneratorError>;
}

impl TargetSource for PredictedTrajectory {
    fn target_at_offset(&self, offset: usize) -> Result<GiverPose, GeneratorError> {
        if self.poses.is_empty() {
            return Err(GeneratorError::HandoverComplete);
        }
        Ok(self.pose_at(offset))
    }
}

/// Samples ahead corresponding to a forecast time.
pub fn forecast_offset(t_f: f64, sample_rate_hz: f64) -> Result<usize, GeneratorError> {
    if !(t_f >= 0.0 && t_f.is_finite()) {
        return Err(GeneratorError::InvalidForecast(t_f));
    }
    Ok((t_f * sample_rate_hz).round() as usize)
}

/// Target pose `t_f` seconds ahead, clamped to the end of the horizon.
pub fn forecast_pose<S: TargetSource + ?Sized>(source: &S, t_f: f64, sample_rate_hz: f64) -> Result<GiverPose, GeneratorError> {
    source.target_at_offset(forecast_offset(t_f, sample_rate_hz)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    /// Maximum number of buffered predictions.
    pub chunk_size: usize,
    /// Weight ratio between a prediction and the one issued a tick later.
    pub decay: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self { chunk_size: 30, decay: 0.8 }
    }
}

/// Temporal ensemble over recently issued predictions.
///
/// Each buffered prediction is evaluated at the same absolute target tick and
/// the results are averaged with weight `decay^i` for a prediction issued `i`
/// ticks before the newest one.
#[derive(Debug, Clone)]
pub struct EnsembleBuffer {
    config: EnsembleConfig,
    entries: VecDeque<(u64, PredictedTrajectory)>,
}

impl EnsembleBuffer {
    pub fn new(config: EnsembleConfig) -> Result<Self, GeneratorError> {
        if config.chunk_size == 0 || !(config.decay > 0.0 && config.decay <= 1.0) {
            return Err(GeneratorError::InvalidEnsemble);
        }
        Ok(Self { config, entries: VecDeque::with_capacity(config.chunk_size) })
    }

    pub fn config(&self) -> &EnsembleConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn latest_tick(&self) -> Option<u64> {
        self.entries.back().map(|e| e.0)
    }

    /// Insert a prediction issued at `tick`; ticks must not decrease.
    pub fn push(&mut self, tick: u64, pred: PredictedTrajectory) -> Result<(), GeneratorError> {
        if pred.poses.is_empty() {
            return Err(GeneratorError::HandoverComplete);
        }
        if self.latest_tick().is_some_and(|last| tick < last) {
            return Err(GeneratorError::NonMonotonic);
        }
        self.entries.push_back((tick, pred));
        while self.entries.len() > self.config.chunk_size {
            self.entries.pop_front();
        }
        Ok(())
    }

    /// Ensemble pose at absolute tick `target`.
    pub fn pose_at_tick(&self, target: u64) -> Result<GiverPose, GeneratorError> {
        let (latest, newest) = self.entries.back().ok_or(GeneratorError::EmptyBuffer)?;
        // deviations from the newest prediction keep identical inputs an exact fixed point
        let anchor = newest.pose_at(target.saturating_sub(*latest) as usize);
        let mut acc = [0.0; 3];
        let mut total = 0.0;
        for (tick, pred) in &self.entries {
            let w = self.config.decay.powi((latest - tick) as i32);
            let p = pred.pose_at(target.saturating_sub(*tick) as usize);
            acc[0] += w * (p.x - anchor.x);
            acc[1] += w * (p.y - anchor.y);
            acc[2] += w * (p.z - anchor.z);
            total += w;
        }
        Ok(GiverPose::new(anchor.x + acc[0] / total, anchor.y + acc[1] / total, anchor.z + acc[2] / total))
    }

    /// Push `pred` as the newest prediction and query `offset` ticks ahead of it.
    pub fn push_and_query(&mut self, tick: u64, pred: PredictedTrajectory, offset: usize) -> Result<GiverPose, GeneratorError> {
        self.push(tick, pred)?;
        self.pose_at_tick(tick + offset as u64)
    }
}

impl TargetSource for EnsembleBuffer {
    fn target_at_offset(&self, offset: usize) -> Result<GiverPose, GeneratorError> {
        let latest = self.latest_tick().ok_or(GeneratorError::EmptyBuffer)?;
        self.pose_at_tick(latest + offset as u64)
    }
}
