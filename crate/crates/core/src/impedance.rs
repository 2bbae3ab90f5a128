//! Cartesian impedance control of a point-mass end effector and closed-loop
//! handover rollouts.
//!
//! The commanded force follows
//!
//! ```text
//! F = M (a_d - a) + B (v_d - v) + K (x_d - x)
//! ```
//!
//! on the three translational axes. The plant is a point mass integrated with
//! semi-implicit Euler.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{generate_one, GeneratorConfig, GiverPose, Label, ReceiverPose};
use crate::generator::{EnsembleBuffer, EnsembleConfig, GeneratorError, PredictionContext, PredictionSession};

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ImpedanceError {
    #[error("{name} = {value} outside [{min}, {max}]")]
    OutOfRange { name: &'static str, value: f64, min: f64, max: f64 },
    #[error("invalid gains: mass must be positive, stiffness and damping non-negative")]
    InvalidGains,
    #[error("non-finite force")]
    NonFiniteForce,
    #[error("time step must be positive and finite")]
    InvalidTimeStep,
    #[error("gripper already released")]
    AlreadyReleased,
    #[error("invalid rollout config: {0}")]
    InvalidConfig(&'static str),
    #[error("scenario: {0}")]
    Scenario(#[from] crate::dataset::DatasetError),
    #[error(transparent)]
    Prediction(#[from] GeneratorError),
}

pub const DEFAULT_MASS: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpedanceGains {
    pub mass: f64,
    pub damping: f64,
    pub stiffness: f64,
}

impl ImpedanceGains {
    pub fn new(mass: f64, damping: f64, stiffness: f64) -> Result<Self, ImpedanceError> {
        let gains = Self { mass, damping, stiffness };
        gains.validate()?;
        Ok(gains)
    }

    pub fn validate(&self) -> Result<(), ImpedanceError> {
        let ok = self.mass > 0.0
            && self.mass.is_finite()
            && self.damping >= 0.0
            && self.damping.is_finite()
            && self.stiffness >= 0.0
            && self.stiffness.is_finite();
        if ok {
            Ok(())
        } else {
            Err(ImpedanceError::InvalidGains)
        }
    }
}

/// The four tunable handover parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandoverParams {
    /// Stiffness K (N/m).
    pub stiffness: f64,
    /// Damping B (N s/m).
    pub damping: f64,
    /// Forecast time t_f (s).
    pub forecast_time: f64,
    /// Release force threshold f_r (N).
    pub release_force: f64,
}

impl HandoverParams {
    pub const STIFFNESS_RANGE: [f64; 2] = [80.0, 140.0];
    pub const DAMPING_RANGE: [f64; 2] = [10.0, 20.0];
    pub const FORECAST_RANGE: [f64; 2] = [0.0, 1.0];
    pub const RELEASE_RANGE: [f64; 2] = [5.0, 20.0];

    /// Tuned parameter set.
    pub const TUNED: Self = Self { stiffness: 114.3, damping: 17.1, forecast_time: 0.14, release_force: 7.1 };

    pub fn new(stiffness: f64, damping: f64, forecast_time: f64, release_force: f64) -> Result<Self, ImpedanceError> {
        let p = Self { stiffness, damping, forecast_time, release_force };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ImpedanceError> {
        let checks = [
            ("K", self.stiffness, Self::STIFFNESS_RANGE),
            ("B", self.damping, Self::DAMPING_RANGE),
            ("t_f", self.forecast_time, Self::FORECAST_RANGE),
            ("f_r", self.release_force, Self::RELEASE_RANGE),
        ];
        for (name, value, [min, max]) in checks {
            if !(value >= min && value <= max) {
                return Err(ImpedanceError::OutOfRange { name, value, min, max });
            }
        }
        Ok(())
    }

    pub fn gains(&self, mass: f64) -> ImpedanceGains {
        ImpedanceGains { mass, damping: self.damping, stiffness: self.stiffness }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.stiffness, self.damping, self.forecast_time, self.release_force]
    }

    pub fn from_array(a: [f64; 4]) -> Result<Self, ImpedanceError> {
        Self::new(a[0], a[1], a[2], a[3])
    }
}

impl Default for HandoverParams {
    fn default() -> Self {
        Self::TUNED
    }
}

/// Desired position, velocity and acceleration.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TargetState {
    pub x: Vec3,
    pub v: Vec3,
    pub a: Vec3,
}

impl TargetState {
    pub fn fixed(x: Vec3) -> Self {
        Self { x, v: Vec3::zeros(), a: Vec3::zeros() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Gripper {
    Holding,
    Released,
}

impl Gripper {
    /// Open when the external force magnitude exceeds `release_force`.
    /// Returns whether the gripper opened on this call.
    pub fn check_release(&mut self, f_ext: &Vec3, release_force: f64) -> Result<bool, ImpedanceError> {
        if *self == Gripper::Released {
            return Err(ImpedanceError::AlreadyReleased);
        }
        let open = f_ext.norm() > release_force;
        if open {
            *self = Gripper::Released;
        }
        Ok(open)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EndEffectorState {
    pub x: Vec3,
    pub v: Vec3,
    pub gripper: Gripper,
    pub f_ext: Vec3,
}

impl EndEffectorState {
    pub fn at_rest(x: Vec3) -> Self {
        Self { x, v: Vec3::zeros(), gripper: Gripper::Holding, f_ext: Vec3::zeros() }
    }

    /// Virtual spring-damper energy with respect to a fixed target.
    pub fn energy(&self, gains: &ImpedanceGains, target: &Vec3) -> f64 {
        0.5 * gains.mass * self.v.norm_squared() + 0.5 * gains.stiffness * (target - self.x).norm_squared()
    }
}

/// Commanded force for the given target, state and measured acceleration.
pub fn impedance_force(gains: &ImpedanceGains, target: &TargetState, state: &EndEffectorState, accel: &Vec3) -> Vec3 {
    (target.a - accel) * gains.mass + (target.v - state.v) * gains.damping + (target.x - state.x) * gains.stiffness
}

/// Semi-implicit Euler step of the point mass.
pub fn step(state: &EndEffectorState, force: &Vec3, f_ext: &Vec3, mass: f64, dt: f64) -> Result<EndEffectorState, ImpedanceError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(ImpedanceError::InvalidTimeStep);
    }
    if !(force.iter().all(|f| f.is_finite()) && f_ext.iter().all(|f| f.is_finite())) {
        return Err(ImpedanceError::NonFiniteForce);
    }
    let v = state.v + (force + f_ext) * (dt / mass);
    Ok(EndEffectorState { x: state.x + v * dt, v, gripper: state.gripper, f_ext: *f_ext })
}

/// Receiver grasp model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraspConfig {
    pub enabled: bool,
    /// Hand-to-end-effector distance that counts as reachable (m).
    pub radius: f64,
    /// Time within the radius before pulling starts (s).
    pub dwell: f64,
    /// Final pull force (N).
    pub peak_force: f64,
    /// Time to ramp up to the final pull force (s).
    pub ramp: f64,
}

impl Default for GraspConfig {
    fn default() -> Self {
        Self { enabled: true, radius: 0.15, dwell: 0.2, peak_force: 20.0, ramp: 0.3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    /// A fresh in-distribution approach.
    Id,
    /// A fresh out-of-distribution approach.
    Ood,
    /// Receiver already standing at the handoff point.
    Static,
    /// Receiver stays far away.
    Absent,
    /// Straight approach at constant speed, then standing.
    ConstantVelocity,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 5] =
        [ScenarioKind::Id, ScenarioKind::Ood, ScenarioKind::Static, ScenarioKind::Absent, ScenarioKind::ConstantVelocity];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::Id => "id",
            ScenarioKind::Ood => "ood",
            ScenarioKind::Static => "static",
            ScenarioKind::Absent => "absent",
            ScenarioKind::ConstantVelocity => "constant-velocity",
        }
    }
}

/// Receiver motion sampled at the perception rate; the last pose is held.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceiverScenario {
    pub kind: ScenarioKind,
    pub seed: u64,
    pub sample_rate_hz: f64,
    pub poses: Vec<ReceiverPose>,
    /// Height of the receiver's hand (m).
    pub hand_height: f64,
    pub giver_rest: GiverPose,
}

impl ReceiverScenario {
    pub const CONSTANT_SPEED: f64 = 1.0;
    pub const DEFAULT_HAND_HEIGHT: f64 = 1.07;

    pub fn generate(kind: ScenarioKind, seed: u64, cfg: &GeneratorConfig) -> Result<Self, ImpedanceError> {
        let rate = cfg.sample_rate_hz;
        let giver = Vector2::new(cfg.giver_xy[0], cfg.giver_xy[1]);
        let stop = 0.5 * (cfg.stop_distance[0] + cfg.stop_distance[1]);
        let mut hand_height = Self::DEFAULT_HAND_HEIGHT;
        let poses = match kind {
            ScenarioKind::Id | ScenarioKind::Ood => {
                let label = if kind == ScenarioKind::Id { Label::InDistribution } else { Label::OutOfDistribution };
                let pair = generate_one(cfg, label, seed)?;
                hand_height = pair.giver.pose(pair.giver.len() - 1).z;
                pair.receiver.poses().collect()
            }
            ScenarioKind::Static => {
                let p = giver + Vector2::new(stop, 0.0);
                alloc::vec![ReceiverPose::new(p.x, p.y); (3.0 * rate) as usize]
            }
            ScenarioKind::Absent => {
                let p = giver + Vector2::new(5.0, 0.0);
                alloc::vec![ReceiverPose::new(p.x, p.y); 2]
            }
            ScenarioKind::ConstantVelocity => {
                let start = 0.5 * (cfg.start_distance[0] + cfg.start_distance[1]);
                let walk = (start - stop) / Self::CONSTANT_SPEED;
                let n = (walk * rate).ceil() as usize + 1;
                (0..n)
                    .map(|i| {
                        let d = (start - Self::CONSTANT_SPEED * i as f64 / rate).max(stop);
                        let p = giver + Vector2::new(d, 0.0);
                        ReceiverPose::new(p.x, p.y)
                    })
                    .collect()
            }
        };
        Ok(Self { kind, seed, sample_rate_hz: rate, poses, hand_height, giver_rest: cfg.giver_rest() })
    }

    pub fn receiver_at(&self, tick: usize) -> ReceiverPose {
        self.poses[tick.min(self.poses.len() - 1)]
    }

    pub fn hand_at(&self, tick: usize) -> Vec3 {
        let p = self.receiver_at(tick);
        Vec3::new(p.x, p.y, self.hand_height)
    }

    /// Horizontal unit vector from the giver toward the receiver.
    fn pull_direction(&self, tick: usize) -> Vec3 {
        let p = self.receiver_at(tick);
        let d = Vec3::new(p.x - self.giver_rest.x, p.y - self.giver_rest.y, 0.0);
        let n = d.norm();
        if n > 1e-9 {
            d / n
        } else {
            Vec3::x()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RolloutConfig {
    pub mass: f64,
    /// Control period (s).
    pub control_dt: f64,
    pub timeout: f64,
    pub ensemble: EnsembleConfig,
    pub grasp: GraspConfig,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            mass: DEFAULT_MASS,
            control_dt: 0.005,
            timeout: 15.0,
            ensemble: EnsembleConfig::default(),
            grasp: GraspConfig::default(),
        }
    }
}

impl RolloutConfig {
    pub fn validate(&self) -> Result<(), ImpedanceError> {
        if !(self.mass > 0.0) {
            return Err(ImpedanceError::InvalidConfig("mass must be positive"));
        }
        if !(self.control_dt > 0.0 && self.control_dt.is_finite()) {
            return Err(ImpedanceError::InvalidTimeStep);
        }
        if !(self.timeout > 0.0 && self.timeout.is_finite()) {
            return Err(ImpedanceError::InvalidConfig("timeout must be positive"));
        }
        let g = &self.grasp;
        if !(g.radius >= 0.0 && g.dwell >= 0.0 && g.peak_force >= 0.0 && g.ramp > 0.0) {
            return Err(ImpedanceError::InvalidConfig("grasp parameters"));
        }
        Ok(())
    }
}

/// One control step of a rollout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RolloutSample {
    pub t: f64,
    /// Tracked target (forecast by `t_f`).
    pub target: [f64; 3],
    /// Ensemble target at the current time.
    pub reference: [f64; 3],
    pub ee: [f64; 3],
    pub velocity: [f64; 3],
    pub force: [f64; 3],
    pub f_ext: [f64; 3],
    pub receiver: [f64; 2],
    pub gripper: Gripper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutResult {
    pub params: HandoverParams,
    pub scenario: ScenarioKind,
    pub seed: u64,
    pub samples: Vec<RolloutSample>,
    pub released: bool,
    /// Time of release, defined iff released.
    pub handover_time: Option<f64>,
    /// Time at which the receiver started pulling.
    pub grasp_time: Option<f64>,
    /// RMS distance between tracked target and end effector (m).
    pub tracking_rmse: f64,
    pub max_force: f64,
}

fn arr(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn pose_vec(p: GiverPose) -> Vec3 {
    Vec3::new(p.x, p.y, p.z)
}

/// Target trajectory held between perception ticks.
#[derive(Debug, Clone, Copy)]
struct HeldTarget {
    t0: f64,
    x: Vec3,
    v: Vec3,
    a: Vec3,
}

impl HeldTarget {
    fn still(t0: f64, x: Vec3) -> Self {
        Self { t0, x, v: Vec3::zeros(), a: Vec3::zeros() }
    }

    /// Fit position, velocity and acceleration from ensemble poses at ticks
    /// `tick`, `tick + 1` and `tick + 2`.
    fn from_ensemble(buf: &EnsembleBuffer, tick: u64, t0: f64, period: f64) -> Result<Self, GeneratorError> {
        let p0 = pose_vec(buf.pose_at_tick(tick)?);
        let p1 = pose_vec(buf.pose_at_tick(tick + 1)?);
        let p2 = pose_vec(buf.pose_at_tick(tick + 2)?);
        let v = (p1 * 4.0 - p0 * 3.0 - p2) / (2.0 * period);
        let a = (p0 - p1 * 2.0 + p2) / (period * period);
        Ok(Self { t0, x: p0, v, a })
    }

    fn at(&self, t: f64) -> TargetState {
        let tau = t - self.t0;
        TargetState { x: self.x + self.v * tau + self.a * (0.5 * tau * tau), v: self.v + self.a * tau, a: self.a }
    }
}

/// Closed-loop handover: 30 Hz prediction, temporal ensemble and forecast,
/// impedance control and force-threshold release at the control rate.
///
/// The plant has no acceleration sensing, so the acceleration term uses the
/// desired acceleration as feedforward and zero as the measured value.
pub fn rollout(
    ctx: &PredictionContext,
    params: &HandoverParams,
    scenario: &ReceiverScenario,
    config: &RolloutConfig,
) -> Result<RolloutResult, ImpedanceError> {
    params.validate()?;
    config.validate()?;
    let gains = params.gains(config.mass);
    let period = 1.0 / scenario.sample_rate_hz;
    let dt = config.control_dt;
    let offset = crate::generator::forecast_offset(params.forecast_time, scenario.sample_rate_hz)? as u64;
    let steps = (config.timeout / dt).round() as usize;

    let mut session = PredictionSession::new(ctx);
    let mut ensemble = EnsembleBuffer::new(config.ensemble)?;
    let rest = pose_vec(scenario.giver_rest);
    let mut state = EndEffectorState::at_rest(rest);
    let mut tracked = HeldTarget::still(0.0, rest);
    let mut reference = HeldTarget::still(0.0, rest);

    let mut samples = Vec::with_capacity(steps.min(1 << 16));
    let mut next_tick = 0usize;
    let mut dwell = 0.0;
    let mut grasp: Option<(f64, Vec3)> = None;
    let mut handover_time = None;
    let mut max_force: f64 = 0.0;
    let mut err2 = 0.0;

    for k in 0..steps {
        let t = k as f64 * dt;
        let mut tick = next_tick.saturating_sub(1);
        if t + 1e-9 >= next_tick as f64 * period {
            tick = next_tick;
            let t_obs = tick as f64 * period;
            session.push(t_obs, scenario.receiver_at(tick))?;
            match session.predict() {
                Ok(pred) => {
                    ensemble.push(tick as u64, pred)?;
                    tracked = HeldTarget::from_ensemble(&ensemble, tick as u64 + offset, t_obs, period)?;
                    reference = HeldTarget::from_ensemble(&ensemble, tick as u64, t_obs, period)?;
                }
                Err(GeneratorError::HandoverComplete) => {}
                Err(e) => return Err(e.into()),
            }
            next_tick += 1;
        }

        let hand = scenario.hand_at(tick);
        let f_ext = match grasp {
            Some((t_g, dir)) => dir * (config.grasp.peak_force * ((t - t_g) / config.grasp.ramp).min(1.0)),
            None => {
                if config.grasp.enabled && (state.x - hand).norm() < config.grasp.radius {
                    dwell += dt;
                    if dwell >= config.grasp.dwell - 1e-12 {
                        grasp = Some((t, scenario.pull_direction(tick)));
                    }
                } else {
                    dwell = 0.0;
                }
                Vec3::zeros()
            }
        };
        state.f_ext = f_ext;
        let released = state.gripper.check_release(&f_ext, params.release_force)?;

        let target = tracked.at(t);
        let force = impedance_force(&gains, &target, &state, &Vec3::zeros());
        max_force = max_force.max(force.norm());
        err2 += (target.x - state.x).norm_squared();
        let receiver = scenario.receiver_at(tick);
        samples.push(RolloutSample {
            t,
            target: arr(&target.x),
            reference: arr(&reference.at(t).x),
            ee: arr(&state.x),
            velocity: arr(&state.v),
            force: arr(&force),
            f_ext: arr(&f_ext),
            receiver: [receiver.x, receiver.y],
            gripper: state.gripper,
        });
        if released {
            handover_time = Some(t);
            break;
        }
        state = step(&state, &force, &f_ext, gains.mass, dt)?;
    }

    let tracking_rmse = if samples.is_empty() { 0.0 } else { (err2 / samples.len() as f64).sqrt() };
    Ok(RolloutResult {
        params: *params,
        scenario: scenario.kind,
        seed: scenario.seed,
        released: handover_time.is_some(),
        handover_time,
        grasp_time: grasp.map(|g| g.0),
        tracking_rmse,
        max_force,
        samples,
    })
}

/// Time shift (s) that best aligns `actual` with a delayed copy of
/// `reference`; both sampled every `dt`. Positive values mean `actual` lags.
pub fn estimate_lag(reference: &[[f64; 3]], actual: &[[f64; 3]], dt: f64, max_shift: f64) -> f64 {
    let n = reference.len().min(actual.len());
    let max_j = ((max_shift / dt).round() as isize).min(n as isize / 2);
    let mut best = (f64::INFINITY, 0isize);
    for j in -max_j..=max_j {
        let mut acc = 0.0;
        let mut count = 0usize;
        for i in 0..n {
            let r = i as isize - j;
            if r < 0 || r >= n as isize {
                continue;
            }
            let a = actual[i];
            let b = reference[r as usize];
            acc += (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2);
            count += 1;
        }
        let mse = acc / count as f64;
        if mse < best.0 {
            best = (mse, j);
        }
    }
    best.1 as f64 * dt
}

/// Tracking lag of a rollout against the current-time ensemble target.
pub fn rollout_lag(result: &RolloutResult, dt: f64, max_shift: f64) -> f64 {
    let reference: Vec<[f64; 3]> = result.samples.iter().map(|s| s.reference).collect();
    let actual: Vec<[f64; 3]> = result.samples.iter().map(|s| s.ee).collect();
    estimate_lag(&reference, &actual, dt, max_shift)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(x: Vec3, v: Vec3) -> EndEffectorState {
        EndEffectorState { x, v, gripper: Gripper::Holding, f_ext: Vec3::zeros() }
    }

    #[test]
    fn force_examples() {
        let g = ImpedanceGains::new(DEFAULT_MASS, 17.1, 114.3).unwrap();
        let s = state(Vec3::zeros(), Vec3::zeros());
        assert_eq!(impedance_force(&g, &TargetState::default(), &s, &Vec3::zeros()), Vec3::zeros());
        let f = impedance_force(&g, &TargetState::fixed(Vec3::x()), &s, &Vec3::zeros());
        assert_eq!(f, Vec3::new(114.3, 0.0, 0.0));
        let g0 = ImpedanceGains::new(DEFAULT_MASS, 17.1, 0.0).unwrap();
        let t = TargetState { x: Vec3::zeros(), v: Vec3::y(), a: Vec3::zeros() };
        assert_eq!(impedance_force(&g0, &t, &s, &Vec3::zeros()), Vec3::new(0.0, 17.1, 0.0));
        let ta = TargetState { a: Vec3::new(0.0, 0.0, 1.5), ..TargetState::default() };
        assert_eq!(impedance_force(&g, &ta, &s, &Vec3::new(0.0, 0.0, 0.5)), Vec3::new(0.0, 0.0, 2.0));
        assert!(ImpedanceGains::new(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn step_closed_forms() {
        let s = state(Vec3::new(0.1, 0.2, 0.3), Vec3::zeros());
        assert_eq!(step(&s, &Vec3::zeros(), &Vec3::zeros(), 2.0, 0.005).unwrap().x, s.x);
        let f = Vec3::new(3.0, -1.0, 0.5);
        let mut cur = state(Vec3::zeros(), Vec3::zeros());
        for _ in 0..100 {
            cur = step(&cur, &f, &Vec3::zeros(), 2.0, 0.005).unwrap();
        }
        let expected = f * (100.0 * 0.005 / 2.0);
        assert!((cur.v - expected).norm() < 1e-12);
        assert!(step(&s, &Vec3::new(f64::NAN, 0.0, 0.0), &Vec3::zeros(), 2.0, 0.005).is_err());
        assert!(step(&s, &Vec3::zeros(), &Vec3::zeros(), 2.0, 0.0).is_err());
    }

    #[test]
    fn critically_damped_regulation_does_not_overshoot() {
        for k in [80.0, 114.3, 140.0] {
            let b = 2.0 * (k * DEFAULT_MASS).sqrt();
            let g = ImpedanceGains::new(DEFAULT_MASS, b, k).unwrap();
            let target = TargetState::fixed(Vec3::zeros());
            let mut s = state(Vec3::new(0.2, 0.0, 0.0), Vec3::zeros());
            let mut min_x: f64 = 0.2;
            for _ in 0..4000 {
                let f = impedance_force(&g, &target, &s, &Vec3::zeros());
                s = step(&s, &f, &Vec3::zeros(), g.mass, 0.005).unwrap();
                min_x = min_x.min(s.x.x);
            }
            assert!(min_x > -0.01 * 0.2, "overshoot {min_x} for K={k}");
            assert!(s.x.norm() < 1e-6);
        }
    }

    #[test]
    fn release_rule() {
        let mut g = Gripper::Holding;
        assert!(!g.check_release(&Vec3::zeros(), 7.1).unwrap());
        assert!(!g.check_release(&Vec3::new(7.1, 0.0, 0.0), 7.1).unwrap());
        assert!(g.check_release(&Vec3::new(0.0, 7.2, 0.0), 7.1).unwrap());
        assert_eq!(g, Gripper::Released);
        assert!(matches!(g.check_release(&Vec3::zeros(), 7.1), Err(ImpedanceError::AlreadyReleased)));
    }

    #[test]
    fn param_ranges() {
        assert!(HandoverParams::TUNED.validate().is_ok());
        assert!(HandoverParams::new(79.0, 15.0, 0.5, 10.0).is_err());
        assert!(HandoverParams::new(100.0, 15.0, 1.5, 10.0).is_err());
        assert!(HandoverParams::new(100.0, 15.0, 0.5, f64::NAN).is_err());
        let p = HandoverParams::from_array([80.0, 20.0, 0.0, 5.0]).unwrap();
        assert_eq!(p.to_array(), [80.0, 20.0, 0.0, 5.0]);
    }

    #[test]
    fn lag_of_shifted_copy() {
        let reference: Vec<[f64; 3]> = (0..400).map(|i| [(i as f64 * 0.01).sin(), 0.0, 0.0]).collect();
        let mut actual = alloc::vec![reference[0]; 7];
        actual.extend_from_slice(&reference[..393]);
        assert!((estimate_lag(&reference, &actual, 0.005, 0.5) - 0.035).abs() < 1e-12);
        assert_eq!(estimate_lag(&reference, &reference, 0.005, 0.5), 0.0);
    }

    #[test]
    fn scenarios_generate() {
        let cfg = GeneratorConfig::default();
        for kind in ScenarioKind::ALL {
            let s = ReceiverScenario::generate(kind, 3, &cfg).unwrap();
            assert!(!s.poses.is_empty());
            assert_eq!(s, ReceiverScenario::generate(kind, 3, &cfg).unwrap());
        }
        let cv = ReceiverScenario::generate(ScenarioKind::ConstantVelocity, 0, &cfg).unwrap();
        let d = cv.poses[0].distance(&cv.poses[1]);
        assert!((d - ReceiverScenario::CONSTANT_SPEED / cfg.sample_rate_hz).abs() < 1e-12);
    }
}
