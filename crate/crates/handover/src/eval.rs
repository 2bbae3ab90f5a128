//! Cross-validated prediction benchmarks: RMS under stratified k-fold,
//! training-set size sweep, and inducing-ratio vs latency tradeoff.
//!
//! Aggregation order is fixed: per-tick RMS is averaged over the ticks of a
//! pair, then over the pairs of a fold (separately per label), then over folds.

use std::time::Instant;

use handover_core::dataset::{stratified_kfold, stratified_subsample, DatasetError, Fold};
use handover_core::generator::{learn_shared_kernel, FlowFitConfig, GeneratorError, PredictionContext, PredictionSession};
use handover_core::{GiverPose, HandoverDataset, HandoverPair, KernelParams, Label, PredictedTrajectory, SimilarityConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error("prediction and ground truth do not overlap")]
    EmptyOverlap,
    #[error("data ratio must lie in (0, 1], got {0}")]
    InvalidRatio(f64),
    #[error("data ratio {ratio} keeps {kept} trajectories, fewer than k_neighbors = {k}")]
    TooFewTrajectories { ratio: f64, kept: usize, k: usize },
    #[error("pair {0} is too short to evaluate after the warm-up")]
    NothingToEvaluate(String),
}

/// What gets fitted for each split.
#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    pub flow: FlowFitConfig,
    pub similarity: SimilarityConfig,
    pub k_neighbors: usize,
    /// Fixed kernel; learned from each training split when absent.
    pub kernel: Option<KernelParams>,
}

impl Default for Pipeline {
    fn default() -> Self {
        Self { flow: FlowFitConfig::default(), similarity: SimilarityConfig::default(), k_neighbors: 10, kernel: None }
    }
}

impl Pipeline {
    pub fn from_config(config: &crate::config::ToolkitConfig) -> Self {
        Self {
            flow: config.flow.clone(),
            similarity: config.similarity,
            k_neighbors: config.prediction.k_neighbors,
            kernel: None,
        }
    }

    pub fn with_inducing_ratio(mut self, ratio: f64) -> Self {
        self.flow.inducing_ratio = ratio;
        self
    }

    fn kernel_for(&self, train: &HandoverDataset) -> Result<KernelParams, EvalError> {
        match self.kernel {
            Some(k) => Ok(k),
            None => Ok(learn_shared_kernel(train, &self.flow)?),
        }
    }

    fn fit(&self, train: &HandoverDataset, kernel: KernelParams) -> Result<PredictionContext, EvalError> {
        Ok(PredictionContext::fit_with_kernel(train, self.flow.inducing_ratio, kernel, self.similarity, self.k_neighbors)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub k_folds: usize,
    pub seed: u64,
    /// Observation time before the first prediction (s).
    pub warmup_s: f64,
    pub data_ratios: Vec<f64>,
    pub inducing_ratios: Vec<f64>,
    /// Minimum number of timed prediction ticks per inducing ratio.
    pub latency_ticks: usize,
    /// Timed queries discarded before measuring.
    pub latency_warmup: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k_folds: 10,
            seed: 7,
            warmup_s: 0.5,
            data_ratios: vec![0.1, 0.25, 0.5, 1.0],
            inducing_ratios: vec![0.1, 0.2, 0.4, 0.7, 1.0],
            latency_ticks: 1000,
            latency_warmup: 3,
        }
    }
}

/// Mean and Bessel-corrected standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, std: f64::NAN, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std, n }
    }

    /// Coefficient of variation.
    pub fn cv(&self) -> f64 {
        self.std / self.mean
    }
}

/// Machine and build facts recorded with every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvMeta {
    pub version: String,
    pub os: String,
    pub arch: String,
    pub cpus: usize,
    pub threads: usize,
    pub debug_assertions: bool,
}

impl EnvMeta {
    pub fn collect() -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").into(),
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
            threads: rayon::current_num_threads(),
            debug_assertions: cfg!(debug_assertions),
        }
    }
}

/// RMS Euclidean distance in millimeters over the overlapping horizon.
pub fn rms_error(pred: &PredictedTrajectory, truth: &[GiverPose]) -> Result<f64, EvalError> {
    rms_error_poses(&pred.poses, truth)
}

pub fn rms_error_poses(pred: &[GiverPose], truth: &[GiverPose]) -> Result<f64, EvalError> {
    let n = pred.len().min(truth.len());
    if n == 0 {
        return Err(EvalError::EmptyOverlap);
    }
    let sum: f64 = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p.x - t.x).powi(2) + (p.y - t.y).powi(2) + (p.z - t.z).powi(2))
        .sum();
    Ok((sum / n as f64).sqrt() * 1000.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub id: String,
    pub label: Label,
    pub rms_mm: f64,
    pub ticks: usize,
}

fn warmup_ticks(pair: &HandoverPair, warmup_s: f64) -> usize {
    (warmup_s * pair.receiver.sample_rate_hz() - 1e-9).ceil().max(0.0) as usize
}

/// Replay the receiver of `pair` tick by tick and score every prediction
/// made after the warm-up against the recorded giver.
pub fn evaluate_pair(ctx: &PredictionContext, pair: &HandoverPair, warmup_s: f64) -> Result<PairScore, EvalError> {
    let start = warmup_ticks(pair, warmup_s);
    let truth: Vec<GiverPose> = pair.giver.poses().collect();
    let mut session = PredictionSession::new(ctx);
    let mut total = 0.0;
    let mut ticks = 0;
    for (i, s) in pair.receiver.samples().iter().enumerate() {
        session.push(s.t, s.pose)?;
        if i < start {
            continue;
        }
        match session.predict() {
            Ok(pred) => {
                total += rms_error(&pred, &truth[i..])?;
                ticks += 1;
            }
            Err(GeneratorError::HandoverComplete) => {}
            Err(e) => return Err(e.into()),
        }
    }
    if ticks == 0 {
        return Err(EvalError::NothingToEvaluate(pair.id.clone()));
    }
    Ok(PairScore { id: pair.id.clone(), label: pair.label, rms_mm: total / ticks as f64, ticks })
}

pub fn evaluate_pairs(ctx: &PredictionContext, pairs: &[&HandoverPair], warmup_s: f64) -> Result<Vec<PairScore>, EvalError> {
    pairs.par_iter().map(|p| evaluate_pair(ctx, p, warmup_s)).collect()
}

fn label_mean(scores: &[PairScore], label: Option<Label>) -> Option<f64> {
    let v: Vec<f64> = scores.iter().filter(|s| label.is_none_or(|l| s.label == l)).map(|s| s.rms_mm).collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldScore {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub kernel: KernelParams,
    pub id_rms_mm: Option<f64>,
    pub ood_rms_mm: Option<f64>,
    pub all_rms_mm: f64,
    pub pairs: Vec<PairScore>,
}

impl FoldScore {
    fn new(fold: usize, n_train: usize, kernel: KernelParams, pairs: Vec<PairScore>) -> Self {
        Self {
            fold,
            n_train,
            n_test: pairs.len(),
            kernel,
            id_rms_mm: label_mean(&pairs, Some(Label::InDistribution)),
            ood_rms_mm: label_mean(&pairs, Some(Label::OutOfDistribution)),
            all_rms_mm: label_mean(&pairs, None).unwrap_or(f64::NAN),
            pairs,
        }
    }
}

/// Per-label statistics over folds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Columns {
    pub id: Stat,
    pub ood: Stat,
    pub all: Stat,
}

impl Columns {
    fn over(folds: &[FoldScore]) -> Self {
        let col = |f: fn(&FoldScore) -> Option<f64>| Stat::of(&folds.iter().filter_map(f).collect::<Vec<_>>());
        Self { id: col(|f| f.id_rms_mm), ood: col(|f| f.ood_rms_mm), all: col(|f| Some(f.all_rms_mm)) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KfoldReport {
    pub k: usize,
    pub seed: u64,
    pub n_pairs: usize,
    pub inducing_ratio: f64,
    pub k_neighbors: usize,
    pub columns: Columns,
    pub folds: Vec<FoldScore>,
    pub meta: EnvMeta,
}

struct SplitData {
    fold: usize,
    train: HandoverDataset,
    test: Vec<HandoverPair>,
}

fn splits(dataset: &HandoverDataset, config: &EvalConfig) -> Result<Vec<SplitData>, EvalError> {
    let folds = stratified_kfold(&dataset.labels(), config.k_folds, config.seed)?;
    folds
        .into_iter()
        .enumerate()
        .map(|(fold, Fold { train, test })| {
            let pick = |ix: &[usize]| ix.iter().map(|&i| dataset.pairs()[i].clone()).collect::<Vec<_>>();
            Ok(SplitData { fold, train: HandoverDataset::new(pick(&train))?, test: pick(&test) })
        })
        .collect()
}

pub fn run_kfold_eval(dataset: &HandoverDataset, pipeline: &Pipeline, config: &EvalConfig) -> Result<KfoldReport, EvalError> {
    let folds: Vec<FoldScore> = splits(dataset, config)?
        .into_par_iter()
        .map(|split| {
            let kernel = pipeline.kernel_for(&split.train)?;
            let ctx = pipeline.fit(&split.train, kernel)?;
            let test: Vec<&HandoverPair> = split.test.iter().collect();
            let scores = evaluate_pairs(&ctx, &test, config.warmup_s)?;
            Ok(FoldScore::new(split.fold, split.train.len(), kernel, scores))
        })
        .collect::<Result<_, EvalError>>()?;
    Ok(KfoldReport {
        k: config.k_folds,
        seed: config.seed,
        n_pairs: dataset.len(),
        inducing_ratio: pipeline.flow.inducing_ratio,
        k_neighbors: pipeline.k_neighbors,
        columns: Columns::over(&folds),
        folds,
        meta: EnvMeta::collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioPoint {
    pub ratio: f64,
    pub mean_train: f64,
    pub columns: Columns,
    pub fold_rms_mm: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEfficiencyReport {
    pub k: usize,
    pub seed: u64,
    pub n_pairs: usize,
    pub points: Vec<RatioPoint>,
    pub meta: EnvMeta,
}

/// Evaluate each fold with stratified subsamples of its training split.
///
/// Flow models and the kernel are fitted once per fold on the full training
/// split; a ratio only changes which stored trajectories the predictor sees.
pub fn run_sample_efficiency(
    dataset: &HandoverDataset,
    pipeline: &Pipeline,
    config: &EvalConfig,
) -> Result<SampleEfficiencyReport, EvalError> {
    for &r in &config.data_ratios {
        if !(r > 0.0 && r <= 1.0) {
            return Err(EvalError::InvalidRatio(r));
        }
    }
    let per_fold: Vec<Vec<FoldScore>> = splits(dataset, config)?
        .into_par_iter()
        .map(|split| {
            let kernel = pipeline.kernel_for(&split.train)?;
            let full = pipeline.fit(&split.train, kernel)?;
            let labels = split.train.labels();
            let all: Vec<usize> = (0..labels.len()).collect();
            let test: Vec<&HandoverPair> = split.test.iter().collect();
            config
                .data_ratios
                .iter()
                .map(|&ratio| {
                    let keep = stratified_subsample(&all, &labels, ratio, config.seed ^ split.fold as u64)?;
                    if keep.len() < pipeline.k_neighbors {
                        return Err(EvalError::TooFewTrajectories { ratio, kept: keep.len(), k: pipeline.k_neighbors });
                    }
                    let ctx = full.subset(&keep)?;
                    let scores = evaluate_pairs(&ctx, &test, config.warmup_s)?;
                    Ok(FoldScore::new(split.fold, keep.len(), kernel, scores))
                })
                .collect()
        })
        .collect::<Result<_, EvalError>>()?;
    let points = config
        .data_ratios
        .iter()
        .enumerate()
        .map(|(j, &ratio)| {
            let folds: Vec<FoldScore> = per_fold.iter().map(|f| f[j].clone()).collect();
            RatioPoint {
                ratio,
                mean_train: folds.iter().map(|f| f.n_train as f64).sum::<f64>() / folds.len() as f64,
                columns: Columns::over(&folds),
                fold_rms_mm: folds.iter().map(|f| f.all_rms_mm).collect(),
            }
        })
        .collect();
    Ok(SampleEfficiencyReport { k: config.k_folds, seed: config.seed, n_pairs: dataset.len(), points, meta: EnvMeta::collect() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub inducing_ratio: f64,
    pub rms_mm: f64,
    pub id_rms_mm: Option<f64>,
    pub ood_rms_mm: Option<f64>,
    pub median_latency_ms: f64,
    pub mean_latency_ms: f64,
    pub timed_ticks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffReport {
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub kernel: KernelParams,
    pub points: Vec<TradeoffPoint>,
    pub meta: EnvMeta,
}

impl TradeoffReport {
    pub fn point(&self, ratio: f64) -> Option<&TradeoffPoint> {
        self.points.iter().find(|p| (p.inducing_ratio - ratio).abs() < 1e-12)
    }
}

/// Wall-clock latency (ms) of push + predict on the calling thread.
pub fn measure_latency(
    ctx: &PredictionContext,
    pairs: &[&HandoverPair],
    warmup_s: f64,
    min_ticks: usize,
    discard: usize,
) -> Result<Vec<f64>, EvalError> {
    let mut out = Vec::with_capacity(min_ticks + discard);
    'pairs: loop {
        let before = out.len();
        for pair in pairs {
            let start = warmup_ticks(pair, warmup_s);
            let mut session = PredictionSession::new(ctx);
            for (i, s) in pair.receiver.samples().iter().enumerate() {
                if i < start {
                    session.push(s.t, s.pose)?;
                    continue;
                }
                let t0 = Instant::now();
                session.push(s.t, s.pose)?;
                let pred = session.predict();
                let elapsed = t0.elapsed().as_secs_f64() * 1000.0;
                match pred {
                    Ok(p) => {
                        std::hint::black_box(p);
                        out.push(elapsed);
                    }
                    Err(GeneratorError::HandoverComplete) => {}
                    Err(e) => return Err(e.into()),
                }
                if out.len() >= min_ticks + discard {
                    break 'pairs;
                }
            }
        }
        if out.len() == before {
            break;
        }
    }
    Ok(out.split_off(discard.min(out.len())))
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// Inducing-ratio sweep on the first fold with one shared kernel.
pub fn run_tradeoff(dataset: &HandoverDataset, pipeline: &Pipeline, config: &EvalConfig) -> Result<TradeoffReport, EvalError> {
    let split = splits(dataset, config)?.swap_remove(0);
    let kernel = pipeline.kernel_for(&split.train)?;
    let test: Vec<&HandoverPair> = split.test.iter().collect();
    let mut points = Vec::new();
    for &ratio in &config.inducing_ratios {
        let ctx = pipeline.clone().with_inducing_ratio(ratio).fit(&split.train, kernel)?;
        let scores = evaluate_pairs(&ctx, &test, config.warmup_s)?;
        let latencies = measure_latency(&ctx, &test, config.warmup_s, config.latency_ticks, config.latency_warmup)?;
        points.push(TradeoffPoint {
            inducing_ratio: ratio,
            rms_mm: label_mean(&scores, None).unwrap_or(f64::NAN),
            id_rms_mm: label_mean(&scores, Some(Label::InDistribution)),
            ood_rms_mm: label_mean(&scores, Some(Label::OutOfDistribution)),
            median_latency_ms: median(&latencies),
            mean_latency_ms: latencies.iter().sum::<f64>() / latencies.len().max(1) as f64,
            timed_ticks: latencies.len(),
        });
    }
    Ok(TradeoffReport {
        seed: config.seed,
        n_train: split.train.len(),
        n_test: test.len(),
        kernel,
        points,
        meta: EnvMeta::collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfInclusionReport {
    pub evaluated: usize,
    pub excluded_rms_mm: f64,
    pub included_rms_mm: f64,
}

/// Score stored pairs against a context that does or does not contain them.
pub fn run_self_inclusion(
    dataset: &HandoverDataset,
    pipeline: &Pipeline,
    evaluated: &[usize],
    warmup_s: f64,
) -> Result<SelfInclusionReport, EvalError> {
    let kernel = pipeline.kernel_for(dataset)?;
    let ctx = pipeline.fit(dataset, kernel)?;
    let scores: Vec<(f64, f64)> = evaluated
        .par_iter()
        .map(|&i| {
            let pair = &dataset.pairs()[i];
            let others: Vec<usize> = (0..dataset.len()).filter(|&j| j != i).collect();
            let excluded = evaluate_pair(&ctx.subset(&others)?, pair, warmup_s)?.rms_mm;
            let included = evaluate_pair(&ctx, pair, warmup_s)?.rms_mm;
            Ok((excluded, included))
        })
        .collect::<Result<_, EvalError>>()?;
    let n = scores.len().max(1) as f64;
    Ok(SelfInclusionReport {
        evaluated: scores.len(),
        excluded_rms_mm: scores.iter().map(|s| s.0).sum::<f64>() / n,
        included_rms_mm: scores.iter().map(|s| s.1).sum::<f64>() / n,
    })
}
