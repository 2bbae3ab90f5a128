//! Gaussian-process preference learning over a discrete grid of handover
//! parameters.
//!
//! A preference `x ≻ x'` has probability `Phi((f(x) - f(x')) / (sqrt(2) sigma))`.
//! The posterior over the utility vector is approximated with Laplace's method
//! and queries are chosen by drawing two posterior samples and proposing each
//! sample's maximizer.
//!
//! Only actions that appear in the data carry likelihood terms, so the Newton
//! iteration runs in that subspace: with `f = K a`, the negative likelihood
//! Hessian `W = R R^T` and `S = I + R^T K R`, one step is
//! `a' = b - R S^-1 R^T K b` where `b = W f + grad`.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::SQRT_2;
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::impedance::HandoverParams;
use crate::linalg::{Cholesky, LinalgError};
use crate::math::{log_normal_cdf, log_normal_cdf_derivs, normal_cdf};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CosparError {
    #[error("invalid grid: {0}")]
    InvalidGrid(&'static str),
    #[error("invalid preference config: {0}")]
    InvalidConfig(&'static str),
    #[error("invalid preference record: winner {winner}, loser {loser}")]
    InvalidRecord { winner: usize, loser: usize },
    #[error("Laplace iteration did not converge after {iterations} steps (gradient norm {gradient_norm:e})")]
    NoConvergence { iterations: usize, gradient_norm: f64 },
    #[error("query selection needs at least two actions")]
    GridTooSmall,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

fn linspace(min: f64, max: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| min + (max - min) * i as f64 / (n - 1) as f64).collect()
}

/// Per-dimension values of K, B, t_f and f_r.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub stiffness: Vec<f64>,
    pub damping: Vec<f64>,
    pub forecast_time: Vec<f64>,
    pub release_force: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            stiffness: linspace(80.0, 140.0, 7),
            damping: linspace(10.0, 20.0, 6),
            forecast_time: linspace(0.0, 1.0, 6),
            release_force: linspace(5.0, 20.0, 7),
        }
    }
}

impl GridSpec {
    fn axes(&self) -> [&[f64]; 4] {
        [&self.stiffness, &self.damping, &self.forecast_time, &self.release_force]
    }
}

const RANGES: [[f64; 2]; 4] = [
    HandoverParams::STIFFNESS_RANGE,
    HandoverParams::DAMPING_RANGE,
    HandoverParams::FORECAST_RANGE,
    HandoverParams::RELEASE_RANGE,
];

/// The finite action set; the last parameter varies fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionGrid {
    spec: GridSpec,
    actions: Vec<[f64; 4]>,
    normalized: Vec<[f64; 4]>,
}

impl ActionGrid {
    pub fn new(spec: GridSpec) -> Result<Self, CosparError> {
        for (axis, [min, max]) in spec.axes().into_iter().zip(RANGES) {
            if axis.is_empty() {
                return Err(CosparError::InvalidGrid("empty axis"));
            }
            if axis.iter().any(|v| !(*v >= min && *v <= max)) {
                return Err(CosparError::InvalidGrid("value outside parameter range"));
            }
            if axis.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(CosparError::InvalidGrid("axis values must increase"));
            }
        }
        let mut actions = Vec::new();
        for &k in &spec.stiffness {
            for &b in &spec.damping {
                for &t in &spec.forecast_time {
                    for &f in &spec.release_force {
                        actions.push([k, b, t, f]);
                    }
                }
            }
        }
        let normalized = actions.iter().map(normalize).collect();
        Ok(Self { spec, actions, normalized })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn raw(&self, index: usize) -> [f64; 4] {
        self.actions[index]
    }

    pub fn params(&self, index: usize) -> HandoverParams {
        let [stiffness, damping, forecast_time, release_force] = self.actions[index];
        HandoverParams { stiffness, damping, forecast_time, release_force }
    }

    /// Coordinates scaled to `[0, 1]` over the parameter ranges.
    pub fn normalized(&self, index: usize) -> [f64; 4] {
        self.normalized[index]
    }

    /// Action closest to `params` in normalized coordinates.
    pub fn nearest(&self, params: &HandoverParams) -> usize {
        let target = normalize(&params.to_array());
        let mut best = (f64::INFINITY, 0);
        for (i, x) in self.normalized.iter().enumerate() {
            let d = sq_dist(x, &target);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }
}

impl Default for ActionGrid {
    fn default() -> Self {
        Self::new(GridSpec::default()).expect("default grid is valid")
    }
}

fn normalize(a: &[f64; 4]) -> [f64; 4] {
    core::array::from_fn(|d| (a[d] - RANGES[d][0]) / (RANGES[d][1] - RANGES[d][0]))
}

fn sq_dist(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Squared-exponential prior over normalized coordinates. A zero lengthscale
/// is the white-noise limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorKernel {
    pub lengthscale: f64,
    pub variance: f64,
}

impl Default for PriorKernel {
    fn default() -> Self {
        Self { lengthscale: 0.3, variance: 1.0 }
    }
}

impl PriorKernel {
    pub fn eval(&self, a: &[f64; 4], b: &[f64; 4]) -> f64 {
        let d2 = sq_dist(a, b);
        if self.lengthscale == 0.0 {
            return if d2 == 0.0 { self.variance } else { 0.0 };
        }
        self.variance * (-0.5 * d2 / (self.lengthscale * self.lengthscale)).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreferenceConfig {
    pub kernel: PriorKernel,
    /// Preference noise sigma.
    pub noise: f64,
    pub max_iterations: usize,
    /// Gradient infinity-norm at which Newton stops.
    pub tolerance: f64,
    pub max_halvings: usize,
}

impl Default for PreferenceConfig {
    fn default() -> Self {
        Self { kernel: PriorKernel::default(), noise: 0.2, max_iterations: 100, tolerance: 1e-8, max_halvings: 20 }
    }
}

impl PreferenceConfig {
    pub fn validate(&self) -> Result<(), CosparError> {
        if !(self.noise > 0.0 && self.noise.is_finite()) {
            return Err(CosparError::InvalidConfig("noise must be positive"));
        }
        if !(self.kernel.lengthscale >= 0.0 && self.kernel.variance > 0.0) {
            return Err(CosparError::InvalidConfig("prior kernel"));
        }
        if self.max_iterations == 0 || !(self.tolerance > 0.0) {
            return Err(CosparError::InvalidConfig("iteration limits"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PreferenceRecord {
    pub winner: usize,
    pub loser: usize,
}

impl PreferenceRecord {
    pub fn new(winner: usize, loser: usize) -> Self {
        Self { winner, loser }
    }

    pub fn validate(&self, actions: usize) -> Result<(), CosparError> {
        if self.winner == self.loser || self.winner >= actions || self.loser >= actions {
            return Err(CosparError::InvalidRecord { winner: self.winner, loser: self.loser });
        }
        Ok(())
    }
}

/// Probability that the action with utility `f_winner` is preferred.
pub fn preference_likelihood(f_winner: f64, f_loser: f64, sigma: f64) -> f64 {
    let z = (f_winner - f_loser) / (SQRT_2 * sigma);
    // both orders go through the same tail value, so the pair sums to exactly 1
    if z > 0.0 {
        1.0 - normal_cdf(-z)
    } else {
        normal_cdf(z)
    }
}

pub fn log_likelihood(records: &[PreferenceRecord], f: &[f64], sigma: f64) -> f64 {
    records.iter().map(|r| log_normal_cdf((f[r.winner] - f[r.loser]) / (SQRT_2 * sigma))).sum()
}

/// Grid, prior kernel and the prior Cholesky factor used for sampling.
///
/// Building the factor is the only cubic cost in the module, so a prior is
/// built once and shared.
#[derive(Debug)]
pub struct PriorModel {
    grid: ActionGrid,
    config: PreferenceConfig,
    chol: Cholesky,
    jitter: f64,
}

impl PriorModel {
    pub fn new(grid: ActionGrid, config: PreferenceConfig) -> Result<Arc<Self>, CosparError> {
        config.validate()?;
        let n = grid.len();
        let kernel = config.kernel;
        let (chol, jitter) = Cholesky::factor_with_jitter(
            n,
            |i, j| kernel.eval(&grid.normalized[i], &grid.normalized[j]),
            1e-10 * kernel.variance,
            12,
        )?;
        Ok(Arc::new(Self { grid, config, chol, jitter }))
    }

    pub fn grid(&self) -> &ActionGrid {
        &self.grid
    }

    pub fn config(&self) -> &PreferenceConfig {
        &self.config
    }

    /// Diagonal jitter that made the prior covariance factorizable.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    fn k(&self, i: usize, j: usize) -> f64 {
        self.config.kernel.eval(&self.grid.normalized[i], &self.grid.normalized[j])
    }

    /// One draw from the prior.
    fn prior_sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.grid.len();
        let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        (0..n).map(|i| (0..=i).map(|j| self.chol.get(i, j) * z[j]).sum()).collect()
    }
}

/// Laplace posterior over the grid utilities.
#[derive(Debug, Clone)]
pub struct PreferencePosterior {
    prior: Arc<PriorModel>,
    records: Vec<PreferenceRecord>,
    mean: Vec<f64>,
    /// Actions that appear in `records`, ascending.
    active: Vec<usize>,
    /// Row-major `A x u` block of the prior covariance against `active`.
    k_active: Vec<f64>,
    /// Row-major `u x n` square-root factor of the likelihood curvature.
    r: Vec<f64>,
    s_chol: Option<Cholesky>,
    iterations: usize,
    gradient_norm: f64,
}

/// Objective pieces on the active set.
struct Local<'a> {
    records: &'a [(usize, usize)],
    scale: f64,
}

impl Local<'_> {
    fn log_lik(&self, f: &[f64]) -> f64 {
        self.records.iter().map(|&(w, l)| log_normal_cdf((f[w] - f[l]) * self.scale)).sum()
    }

    /// Gradient and per-record curvature of the log-likelihood.
    fn derivatives(&self, f: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut grad = vec![0.0; f.len()];
        let mut curv = Vec::with_capacity(self.records.len());
        for &(w, l) in self.records {
            let (d1, d2) = log_normal_cdf_derivs((f[w] - f[l]) * self.scale);
            grad[w] += d1 * self.scale;
            grad[l] -= d1 * self.scale;
            curv.push(-d2 * self.scale * self.scale);
        }
        (grad, curv)
    }
}

fn mat_vec(m: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    (0..rows).map(|i| m[i * cols..(i + 1) * cols].iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `R` (u x n) with column `k = sqrt(c_k) (e_w - e_l)`.
fn build_r(records: &[(usize, usize)], curv: &[f64], u: usize) -> Vec<f64> {
    let n = records.len();
    let mut r = vec![0.0; u * n];
    for (k, (&(w, l), c)) in records.iter().zip(curv).enumerate() {
        let s = c.max(0.0).sqrt();
        r[w * n + k] += s;
        r[l * n + k] -= s;
    }
    r
}

/// Cholesky of `I + R^T K R` and the product `K R` (u x n).
fn inner_system(r: &[f64], kuu: &[f64], u: usize, n: usize) -> Result<(Cholesky, Vec<f64>), CosparError> {
    let mut kr = vec![0.0; u * n];
    for i in 0..u {
        for k in 0..n {
            kr[i * n + k] = (0..u).map(|j| kuu[i * u + j] * r[j * n + k]).sum();
        }
    }
    let chol = Cholesky::factor(n, |a, b| {
        let v: f64 = (0..u).map(|i| r[i * n + a] * kr[i * n + b]).sum();
        if a == b { v + 1.0 } else { v }
    })?;
    Ok((chol, kr))
}

pub fn laplace_posterior(records: &[PreferenceRecord], prior: &Arc<PriorModel>) -> Result<PreferencePosterior, CosparError> {
    let config = prior.config;
    let a_count = prior.grid.len();
    for r in records {
        r.validate(a_count)?;
    }
    let mut active: Vec<usize> = records.iter().flat_map(|r| [r.winner, r.loser]).collect();
    active.sort_unstable();
    active.dedup();
    let u = active.len();
    let n = records.len();
    let local_index = |a: usize| active.binary_search(&a).expect("active action");
    let local: Vec<(usize, usize)> = records.iter().map(|r| (local_index(r.winner), local_index(r.loser))).collect();
    let obj = Local { records: &local, scale: 1.0 / (SQRT_2 * config.noise) };

    let mut kuu = vec![0.0; u * u];
    for i in 0..u {
        for j in 0..u {
            kuu[i * u + j] = prior.k(active[i], active[j]);
        }
    }
    let psi = |a: &[f64], f: &[f64]| obj.log_lik(f) - 0.5 * dot(a, f);

    let mut a = vec![0.0; u];
    let mut f = vec![0.0; u];
    let mut iterations = 0;
    let gradient_norm = loop {
        let (grad, curv) = obj.derivatives(&f);
        let gnorm = grad.iter().zip(&a).map(|(g, ai)| (g - ai).abs()).fold(0.0, f64::max);
        if gnorm < config.tolerance {
            break gnorm;
        }
        if iterations == config.max_iterations {
            return Err(CosparError::NoConvergence { iterations, gradient_norm: gnorm });
        }
        iterations += 1;

        let r = build_r(&local, &curv, u);
        let (s_chol, kr) = inner_system(&r, &kuu, u, n)?;
        // b = W f + grad
        let rtf: Vec<f64> = (0..n).map(|k| (0..u).map(|i| r[i * n + k] * f[i]).sum()).collect();
        let b: Vec<f64> = (0..u).map(|i| grad[i] + dot(&r[i * n..(i + 1) * n], &rtf)).collect();
        let mut t: Vec<f64> = (0..n).map(|k| (0..u).map(|i| kr[i * n + k] * b[i]).sum()).collect();
        s_chol.solve_in_place(&mut t);
        let a_new: Vec<f64> = (0..u).map(|i| b[i] - dot(&r[i * n..(i + 1) * n], &t)).collect();

        let current = psi(&a, &f);
        let mut step = 1.0;
        for h in 0..=config.max_halvings {
            let a_try: Vec<f64> = a.iter().zip(&a_new).map(|(x, y)| x + step * (y - x)).collect();
            let f_try = mat_vec(&kuu, u, u, &a_try);
            let value = psi(&a_try, &f_try);
            if value >= current - 1e-12 * (1.0 + current.abs()) || h == config.max_halvings {
                a = a_try;
                f = f_try;
                break;
            }
            step *= 0.5;
        }
    };

    let (_, curv) = obj.derivatives(&f);
    let r = build_r(&local, &curv, u);
    let s_chol = if n > 0 { Some(inner_system(&r, &kuu, u, n)?.0) } else { None };
    let mut k_active = vec![0.0; a_count * u];
    for i in 0..a_count {
        for (j, &aj) in active.iter().enumerate() {
            k_active[i * u + j] = prior.k(i, aj);
        }
    }
    let mean = mat_vec(&k_active, a_count, u, &a);
    Ok(PreferencePosterior {
        prior: prior.clone(),
        records: records.to_vec(),
        mean,
        active,
        k_active,
        r,
        s_chol,
        iterations,
        gradient_norm,
    })
}

fn argmax(values: &[f64], skip: Option<usize>) -> usize {
    let mut best = (f64::NEG_INFINITY, usize::MAX);
    for (i, &v) in values.iter().enumerate() {
        if Some(i) != skip && (v > best.0 || best.1 == usize::MAX) {
            best = (v, i);
        }
    }
    best.1
}

impl PreferencePosterior {
    /// Prior-only posterior.
    pub fn empty(prior: &Arc<PriorModel>) -> Self {
        laplace_posterior(&[], prior).expect("empty data always converges")
    }

    pub fn prior(&self) -> &Arc<PriorModel> {
        &self.prior
    }

    pub fn grid(&self) -> &ActionGrid {
        &self.prior.grid
    }

    pub fn records(&self) -> &[PreferenceRecord] {
        &self.records
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Infinity-norm of the objective gradient at the mode.
    pub fn gradient_norm(&self) -> f64 {
        self.gradient_norm
    }

    pub fn noise(&self) -> f64 {
        self.prior.config.noise
    }

    pub fn kernel(&self) -> PriorKernel {
        self.prior.config.kernel
    }

    /// Posterior-mean maximizer; ties go to the lower index.
    pub fn incumbent(&self) -> usize {
        argmax(&self.mean, None)
    }

    /// `K_{.U} R` as an `A x n` row-major matrix.
    fn kr_full(&self) -> Vec<f64> {
        let u = self.active.len();
        let n = self.records.len();
        let a = self.prior.grid.len();
        let mut g = vec![0.0; a * n];
        for i in 0..a {
            let row = &self.k_active[i * u..(i + 1) * u];
            for k in 0..n {
                g[i * n + k] = (0..u).map(|j| row[j] * self.r[j * n + k]).sum();
            }
        }
        g
    }

    /// Dense posterior covariance, row-major `A x A`.
    pub fn covariance(&self) -> Vec<f64> {
        let a = self.prior.grid.len();
        let n = self.records.len();
        let mut cov = vec![0.0; a * a];
        for i in 0..a {
            for j in 0..a {
                cov[i * a + j] = self.prior.k(i, j);
            }
        }
        if let Some(s) = &self.s_chol {
            let g = self.kr_full();
            // H = L_S^-1 G^T, one column per action
            let mut h = vec![0.0; a * n];
            for i in 0..a {
                let col = &mut h[i * n..(i + 1) * n];
                col.copy_from_slice(&g[i * n..(i + 1) * n]);
                s.solve_lower_in_place(col);
            }
            for i in 0..a {
                for j in 0..a {
                    cov[i * a + j] -= dot(&h[i * n..(i + 1) * n], &h[j * n..(j + 1) * n]);
                }
            }
        }
        for i in 0..a {
            for j in 0..i {
                let m = 0.5 * (cov[i * a + j] + cov[j * a + i]);
                cov[i * a + j] = m;
                cov[j * a + i] = m;
            }
        }
        cov
    }

    /// Marginal posterior variance of one action.
    pub fn variance(&self, index: usize) -> f64 {
        let mut v = self.prior.k(index, index);
        if let Some(s) = &self.s_chol {
            let u = self.active.len();
            let n = self.records.len();
            let row = &self.k_active[index * u..(index + 1) * u];
            let mut col: Vec<f64> = (0..n).map(|k| (0..u).map(|j| row[j] * self.r[j * n + k]).sum()).collect();
            s.solve_lower_in_place(&mut col);
            v -= dot(&col, &col);
        }
        v
    }

    /// One draw of the utility vector from the posterior.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let f0 = self.prior.prior_sample(rng);
        let mut out: Vec<f64> = self.mean.iter().zip(&f0).map(|(m, p)| m + p).collect();
        let Some(s) = &self.s_chol else { return out };
        let u = self.active.len();
        let n = self.records.len();
        let mut t: Vec<f64> = (0..n)
            .map(|k| {
                let eps: f64 = rng.sample(StandardNormal);
                (0..u).map(|j| self.r[j * n + k] * f0[self.active[j]]).sum::<f64>() + eps
            })
            .collect();
        s.solve_in_place(&mut t);
        let w: Vec<f64> = (0..u).map(|j| dot(&self.r[j * n..(j + 1) * n], &t)).collect();
        for (i, o) in out.iter_mut().enumerate() {
            *o -= dot(&self.k_active[i * u..(i + 1) * u], &w);
        }
        out
    }

    /// Refit with one more record.
    pub fn update(&self, record: PreferenceRecord) -> Result<Self, CosparError> {
        let mut records = self.records.clone();
        records.push(record);
        laplace_posterior(&records, &self.prior)
    }

    pub fn snapshot(&self) -> PreferenceSnapshot {
        let incumbent = self.incumbent();
        PreferenceSnapshot {
            grid: self.prior.grid.spec.clone(),
            config: self.prior.config,
            records: self.records.clone(),
            mean: self.mean.clone(),
            incumbent_index: incumbent,
            incumbent: self.prior.grid.params(incumbent),
        }
    }
}

/// Maximum extra draws of the second sample before falling back.
pub const MAX_RESAMPLES: usize = 10;

/// Two distinct actions, each the maximizer of an independent posterior draw.
/// If the draws keep agreeing, the second action is the runner-up of the last
/// second draw.
pub fn select_query(posterior: &PreferencePosterior, seed: u64) -> Result<(usize, usize), CosparError> {
    if posterior.grid().len() < 2 {
        return Err(CosparError::GridTooSmall);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(pick_pair(|| posterior.sample(&mut rng)))
}

fn pick_pair(mut draw: impl FnMut() -> Vec<f64>) -> (usize, usize) {
    let a = argmax(&draw(), None);
    let mut last = Vec::new();
    for _ in 0..=MAX_RESAMPLES {
        last = draw();
        let b = argmax(&last, None);
        if b != a {
            return (a, b);
        }
    }
    (a, argmax(&last, Some(a)))
}

/// Noisy preference between `a` and `b` given their true utilities.
pub fn synthetic_oracle<R: Rng>(a: usize, b: usize, u_a: f64, u_b: f64, sigma: f64, rng: &mut R) -> PreferenceRecord {
    let p = preference_likelihood(u_a, u_b, sigma);
    if rng.random::<f64>() < p {
        PreferenceRecord::new(a, b)
    } else {
        PreferenceRecord::new(b, a)
    }
}

/// Quadratic bowl `-curvature * |x - peak|^2` on normalized coordinates.
pub fn bowl_utility(grid: &ActionGrid, peak: &HandoverParams, curvature: f64) -> Vec<f64> {
    let p = normalize(&peak.to_array());
    (0..grid.len()).map(|i| -curvature * sq_dist(&grid.normalized(i), &p)).collect()
}

/// Serializable view of a preference session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceSnapshot {
    pub grid: GridSpec,
    pub config: PreferenceConfig,
    pub records: Vec<PreferenceRecord>,
    pub mean: Vec<f64>,
    pub incumbent_index: usize,
    pub incumbent: HandoverParams,
}

/// Rank of `index` among all utilities (0 = best), counting strictly better actions.
pub fn utility_rank(utilities: &[f64], index: usize) -> usize {
    utilities.iter().filter(|&&u| u > utilities[index]).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(values: [f64; 3], config: PreferenceConfig) -> Arc<PriorModel> {
        let spec = GridSpec { stiffness: values.to_vec(), damping: vec![15.0], forecast_time: vec![0.5], release_force: vec![10.0] };
        PriorModel::new(ActionGrid::new(spec).unwrap(), config).unwrap()
    }

    #[test]
    fn default_grid_shape() {
        let g = ActionGrid::default();
        assert_eq!(g.len(), 1764);
        assert_eq!(g.params(0).to_array(), [80.0, 10.0, 0.0, 5.0]);
        assert_eq!(g.params(1763).to_array(), [140.0, 20.0, 1.0, 20.0]);
        for i in 0..g.len() {
            assert!(g.params(i).validate().is_ok());
        }
        let near = g.nearest(&HandoverParams::TUNED);
        assert_eq!(g.params(near).to_array(), [110.0, 18.0, 0.2, 7.5]);
        let bad = GridSpec { stiffness: vec![70.0], ..GridSpec::default() };
        assert!(ActionGrid::new(bad).is_err());
    }

    #[test]
    fn likelihood_examples() {
        assert_eq!(preference_likelihood(0.3, 0.3, 0.2), 0.5);
        assert!((preference_likelihood(SQRT_2, 0.0, 1.0) - 0.841_344_746_068_542_9).abs() < 1e-12);
        for d in [-3.0, -0.7, 0.0, 0.01, 1.9, 5.0] {
            assert_eq!(preference_likelihood(d, 0.0, 0.2) + preference_likelihood(0.0, d, 0.2), 1.0);
        }
        assert_eq!(log_likelihood(&[], &[1.0, 2.0], 0.2), 0.0);
        assert!((log_likelihood(&[PreferenceRecord::new(0, 1)], &[1.0, 1.0], 0.2) - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn empty_data_is_prior() {
        let prior = toy([80.0, 110.0, 140.0], PreferenceConfig::default());
        let post = laplace_posterior(&[], &prior).unwrap();
        assert!(post.mean().iter().all(|m| *m == 0.0));
        let cov = post.covariance();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(cov[i * 3 + j], prior.k(i, j));
            }
        }
    }

    #[test]
    fn ordering_and_gradient() {
        let prior = toy([80.0, 110.0, 140.0], PreferenceConfig::default());
        // 2 > 0 > 1
        let recs = [PreferenceRecord::new(2, 0), PreferenceRecord::new(0, 1), PreferenceRecord::new(2, 1)];
        let post = laplace_posterior(&recs, &prior).unwrap();
        let m = post.mean();
        assert!(m[2] > m[0] && m[0] > m[1]);
        assert!(post.gradient_norm() < 1e-8);
        assert_eq!(post.incumbent(), 2);
        for i in 0..3 {
            assert!((post.variance(i) - post.covariance()[i * 4]).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_records_rejected() {
        let prior = toy([80.0, 110.0, 140.0], PreferenceConfig::default());
        let post = PreferencePosterior::empty(&prior);
        assert!(matches!(post.update(PreferenceRecord::new(1, 1)), Err(CosparError::InvalidRecord { .. })));
        assert!(post.update(PreferenceRecord::new(0, 3)).is_err());
    }

    #[test]
    fn degenerate_draws_fall_back_to_runner_up() {
        let fixed = [0.0, 3.0, 1.0, 2.0, 3.0];
        assert_eq!(pick_pair(|| fixed.to_vec()), (1, 4));
        let mut calls = 0;
        let alternating = pick_pair(|| {
            calls += 1;
            if calls == 1 { vec![1.0, 0.0] } else { vec![0.0, 1.0] }
        });
        assert_eq!(alternating, (0, 1));
        assert_eq!(calls, 2);
    }

    #[test]
    fn query_is_distinct_and_seeded() {
        let prior = PriorModel::new(ActionGrid::default(), PreferenceConfig::default()).unwrap();
        let post = PreferencePosterior::empty(&prior);
        for seed in 0..10 {
            let (a, b) = select_query(&post, seed).unwrap();
            assert_ne!(a, b);
            assert_eq!((a, b), select_query(&post, seed).unwrap());
        }
        let single = GridSpec { stiffness: vec![100.0], damping: vec![15.0], forecast_time: vec![0.5], release_force: vec![10.0] };
        let p1 = PriorModel::new(ActionGrid::new(single).unwrap(), PreferenceConfig::default()).unwrap();
        assert!(matches!(select_query(&PreferencePosterior::empty(&p1), 0), Err(CosparError::GridTooSmall)));
    }

    #[test]
    fn oracle_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            assert_eq!(synthetic_oracle(3, 7, 1e3, 0.0, 0.2, &mut rng), PreferenceRecord::new(3, 7));
        }
        let a = synthetic_oracle(3, 7, 0.1, 0.1, 0.2, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, synthetic_oracle(3, 7, 0.1, 0.1, 0.2, &mut ChaCha8Rng::seed_from_u64(9)));
    }
}
