//! Synthetic human-to-human handover generator.
//!
//! Receivers start in an annular sector in front of the giver and walk toward
//! a stop point in front of the giver. In-distribution walks are near-straight
//! with a smooth lateral sway; out-of-distribution walks bend through a
//! detour, pause for 0.5 to 2 s, or both. The giver's wrist performs a
//! minimum-jerk reach from a rest pose to a handover point ahead of the
//! receiver, timed to the receiver's arrival.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;
use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{
    DatasetError, GiverPose, HandoverDataset, HandoverPair, Label, ReceiverPose, Trajectory,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_id: usize,
    pub n_ood: usize,
    pub sample_rate_hz: f64,
    /// Giver standing location on the floor plane.
    pub giver_xy: [f64; 2],
    /// Height of the giver's wrist at rest.
    pub giver_rest_height: f64,
    /// Receiver start distance from the giver (m).
    pub start_distance: [f64; 2],
    /// Half-width of the start sector around +x (degrees).
    pub approach_half_angle_deg: f64,
    /// Mean walking speed (m/s).
    pub walk_speed: [f64; 2],
    /// Distance from the giver at which the receiver stops (m).
    pub stop_distance: [f64; 2],
    /// Peak lateral sway of in-distribution walks (m).
    pub lateral_sway: f64,
    /// Extra horizontal reach of the giver past the receiver stop distance (m).
    pub reach_overshoot: [f64; 2],
    /// Height of the handover point (m).
    pub handover_height: [f64; 2],
    /// Duration of the giver's reach (s).
    pub reach_duration: [f64; 2],
    /// Giver reach completion relative to receiver arrival (s).
    pub reach_timing: [f64; 2],
    /// Time the receiver stands at the stop point before the recording ends (s).
    pub hold: [f64; 2],
    /// Pause duration for out-of-distribution walks (s).
    pub pause_duration: [f64; 2],
    /// Lateral detour offset as a fraction of the straight-line distance.
    pub detour_fraction: [f64; 2],
    /// Standard deviation of receiver tracking noise (m).
    pub position_noise: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_id: 900,
            n_ood: 100,
            sample_rate_hz: 30.0,
            giver_xy: [0.0, 0.0],
            giver_rest_height: 0.85,
            start_distance: [2.5, 3.5],
            approach_half_angle_deg: 45.0,
            walk_speed: [0.8, 1.4],
            stop_distance: [0.40, 0.48],
            lateral_sway: 0.15,
            reach_overshoot: [0.0, 0.05],
            handover_height: [1.03, 1.12],
            reach_duration: [0.9, 1.4],
            reach_timing: [-0.2, 0.1],
            hold: [0.5, 0.8],
            pause_duration: [0.5, 2.0],
            detour_fraction: [0.35, 0.55],
            position_noise: 0.001,
        }
    }
}

impl GeneratorConfig {
    pub fn with_counts(n_id: usize, n_ood: usize) -> Self {
        Self { n_id, n_ood, ..Self::default() }
    }

    pub fn giver_rest(&self) -> GiverPose {
        GiverPose::new(self.giver_xy[0], self.giver_xy[1], self.giver_rest_height)
    }

    fn validate(&self) -> Result<(), DatasetError> {
        if self.n_id + self.n_ood == 0 {
            return Err(DatasetError::InvalidConfig("non-positive counts"));
        }
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return Err(DatasetError::InvalidConfig("sample rate must be positive"));
        }
        let ranges = [
            self.start_distance,
            self.walk_speed,
            self.stop_distance,
            self.reach_overshoot,
            self.handover_height,
            self.reach_duration,
            self.reach_timing,
            self.hold,
            self.pause_duration,
            self.detour_fraction,
        ];
        if ranges.iter().any(|r| !(r[0] <= r[1]) || !r[0].is_finite() || !r[1].is_finite()) {
            return Err(DatasetError::InvalidConfig("range bounds must be ordered and finite"));
        }
        if self.walk_speed[0] <= 0.0 || self.reach_duration[0] <= 0.0 {
            return Err(DatasetError::InvalidConfig("speeds and durations must be positive"));
        }
        if self.stop_distance[0] <= 0.0 || self.stop_distance[1] >= self.start_distance[0] {
            return Err(DatasetError::InvalidConfig("stop distance must lie inside start distance"));
        }
        if self.position_noise < 0.0 || self.lateral_sway < 0.0 {
            return Err(DatasetError::InvalidConfig("noise and sway must be non-negative"));
        }
        Ok(())
    }
}

/// Minimum-jerk interpolation profile on `[0, 1]`.
pub(crate) fn min_jerk(tau: f64) -> f64 {
    let t = tau.clamp(0.0, 1.0);
    t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

fn uniform(rng: &mut ChaCha8Rng, range: [f64; 2]) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        rng.random_range(range[0]..range[1])
    }
}

/// Dense polyline with a cumulative arc-length table.
struct Path {
    points: Vec<Vector2<f64>>,
    arc: Vec<f64>,
}

impl Path {
    fn from_fn(n: usize, f: impl Fn(f64) -> Vector2<f64>) -> Self {
        let points: Vec<_> = (0..=n).map(|i| f(i as f64 / n as f64)).collect();
        let mut arc = Vec::with_capacity(points.len());
        let mut acc = 0.0;
        arc.push(0.0);
        for w in points.windows(2) {
            acc += (w[1] - w[0]).norm();
            arc.push(acc);
        }
        Self { points, arc }
    }

    fn length(&self) -> f64 {
        self.arc[self.arc.len() - 1]
    }

    fn at(&self, s: f64) -> Vector2<f64> {
        let s = s.clamp(0.0, self.length());
        let i = self.arc.partition_point(|&a| a < s).clamp(1, self.arc.len() - 1);
        let (a0, a1) = (self.arc[i - 1], self.arc[i]);
        let w = if a1 > a0 { (s - a0) / (a1 - a0) } else { 0.0 };
        self.points[i - 1] * (1.0 - w) + self.points[i] * w
    }
}

/// Arc length as a function of time: walk segments separated by pauses.
struct Profile {
    /// (start time, duration, start arc, end arc) per moving segment.
    segments: Vec<(f64, f64, f64, f64)>,
    arrival: f64,
}

impl Profile {
    fn arc_at(&self, t: f64) -> f64 {
        let mut s = 0.0;
        for &(t0, dur, s0, s1) in &self.segments {
            if t < t0 {
                return s;
            }
            s = s0 + (s1 - s0) * min_jerk((t - t0) / dur);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Oddity {
    Pause,
    Detour,
    Both,
}

fn generate_pair(
    cfg: &GeneratorConfig,
    rng: &mut ChaCha8Rng,
    label: Label,
    id: alloc::string::String,
) -> Result<HandoverPair, DatasetError> {
    let giver = Vector2::new(cfg.giver_xy[0], cfg.giver_xy[1]);
    let half = cfg.approach_half_angle_deg.to_radians();
    let angle = if half > 0.0 { rng.random_range(-half..half) } else { 0.0 };
    let dir = Vector2::new(angle.cos(), angle.sin());
    let normal = Vector2::new(-dir.y, dir.x);
    let start = giver + dir * uniform(rng, cfg.start_distance);
    let stop_dist = uniform(rng, cfg.stop_distance);
    let stop = giver + dir * stop_dist;
    let speed = uniform(rng, cfg.walk_speed);

    let oddity = match label {
        Label::InDistribution => None,
        Label::OutOfDistribution => Some(match rng.random_range(0..3u8) {
            0 => Oddity::Pause,
            1 => Oddity::Detour,
            _ => Oddity::Both,
        }),
    };

    let straight = (stop - start).norm();
    let path = match oddity {
        Some(Oddity::Detour) | Some(Oddity::Both) => {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let offset = sign * straight * uniform(rng, cfg.detour_fraction);
            let control = (start + stop) * 0.5 + normal * offset;
            Path::from_fn(400, |u| {
                start * ((1.0 - u) * (1.0 - u)) + control * (2.0 * u * (1.0 - u)) + stop * (u * u)
            })
        }
        _ => {
            let sway = cfg.lateral_sway * rng.random_range(-1.0..=1.0);
            let wobble = 0.25 * cfg.lateral_sway * rng.random_range(-1.0..=1.0);
            Path::from_fn(400, |u| {
                let lateral = sway * (PI * u).sin() + wobble * (2.0 * PI * u).sin();
                start + (stop - start) * u + normal * lateral
            })
        }
    };

    let length = path.length();
    let walk = length / speed;
    let profile = match oddity {
        Some(Oddity::Pause) | Some(Oddity::Both) => {
            let split = rng.random_range(0.3..0.7);
            let pause = uniform(rng, cfg.pause_duration);
            let d0 = walk * split;
            let d1 = walk - d0;
            Profile {
                segments: alloc::vec![
                    (0.0, d0, 0.0, length * split),
                    (d0 + pause, d1, length * split, length),
                ],
                arrival: walk + pause,
            }
        }
        _ => Profile { segments: alloc::vec![(0.0, walk, 0.0, length)], arrival: walk },
    };

    let hold = uniform(rng, cfg.hold);
    let total = profile.arrival + hold;
    let rate = cfg.sample_rate_hz;
    let n = (total * rate).ceil() as usize + 1;

    let reach_to = giver + dir * (stop_dist + uniform(rng, cfg.reach_overshoot));
    let handover_point = Vector3::new(reach_to.x, reach_to.y, uniform(rng, cfg.handover_height));
    let rest = cfg.giver_rest().to_vector();
    let reach_end = (profile.arrival + uniform(rng, cfg.reach_timing)).max(0.1);
    let reach_start = (reach_end - uniform(rng, cfg.reach_duration)).max(0.0);
    let reach_len = reach_end - reach_start;

    let noise = Normal::new(0.0, cfg.position_noise.max(f64::MIN_POSITIVE))
        .map_err(|_| DatasetError::InvalidConfig("position noise"))?;
    let mut receiver = Vec::with_capacity(n);
    let mut giver_poses = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 / rate;
        let p = path.at(profile.arc_at(t));
        let (nx, ny) = if cfg.position_noise > 0.0 {
            (noise.sample(rng), noise.sample(rng))
        } else {
            (0.0, 0.0)
        };
        receiver.push(ReceiverPose::new(p.x + nx, p.y + ny));
        let w = min_jerk((t - reach_start) / reach_len);
        giver_poses.push(GiverPose::from_vector(rest + (handover_point - rest) * w));
    }
    let receiver = Trajectory::from_poses(receiver, rate, 0.0)?;
    let giver = Trajectory::from_poses(giver_poses, rate, 0.0)?;
    HandoverPair::new(id, label, receiver, giver)
}

/// Generate `n_id` in-distribution and `n_ood` out-of-distribution pairs.
///
/// The output is a pure function of `(config, seed)`.
pub fn generate_synthetic(cfg: &GeneratorConfig, seed: u64) -> Result<HandoverDataset, DatasetError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(cfg.n_id + cfg.n_ood);
    for i in 0..cfg.n_id {
        pairs.push(generate_pair(cfg, &mut rng, Label::InDistribution, format!("id-{i:04}"))?);
    }
    for i in 0..cfg.n_ood {
        pairs.push(generate_pair(cfg, &mut rng, Label::OutOfDistribution, format!("ood-{i:04}"))?);
    }
    HandoverDataset::new(pairs)
}

/// A single pair drawn from its own seed; counts in `cfg` are ignored.
pub fn generate_one(cfg: &GeneratorConfig, label: Label, seed: u64) -> Result<HandoverPair, DatasetError> {
    GeneratorConfig { n_id: 1, n_ood: 0, ..cfg.clone() }.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prefix = match label {
        Label::InDistribution => "id",
        Label::OutOfDistribution => "ood",
    };
    generate_pair(cfg, &mut rng, label, format!("{prefix}-s{seed}"))
}

fn speeds(traj: &Trajectory<ReceiverPose>) -> Vec<Vector2<f64>> {
    crate::spgp::finite_difference_velocities(traj)
        .unwrap_or_default()
        .into_iter()
        .map(|v| Vector2::new(v[0], v[1]))
        .collect()
}

/// True if the receiver stands still (speed below `threshold`) for at least
/// `min_samples` consecutive samples before arriving at its final pose.
pub fn has_pause(traj: &Trajectory<ReceiverPose>, threshold: f64, min_samples: usize) -> bool {
    let v = speeds(traj);
    // ignore standing at the start and at the stop point
    let start = traj.pose(0);
    let end = traj.pose(traj.len() - 1);
    let mut run = 0;
    for (i, vel) in v.iter().enumerate() {
        let p = traj.pose(i);
        if vel.norm() < threshold && p.distance(&end) > 0.2 && p.distance(&start) > 0.2 {
            run += 1;
            if run >= min_samples {
                return true;
            }
        } else {
            run = 0;
        }
    }
    false
}

/// True if the walking heading (over samples faster than `min_speed`) turns by
/// more than `angle_deg` between any two samples.
pub fn has_wander(traj: &Trajectory<ReceiverPose>, angle_deg: f64, min_speed: f64) -> bool {
    let headings: Vec<_> = speeds(traj)
        .into_iter()
        .filter(|v| v.norm() > min_speed)
        .map(|v| v / v.norm())
        .collect();
    let cos_limit = angle_deg.to_radians().cos();
    headings
        .iter()
        .enumerate()
        .any(|(i, a)| headings[i + 1..].iter().any(|b| a.dot(b) < cos_limit))
}
