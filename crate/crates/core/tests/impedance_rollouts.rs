use handover_core::dataset::{generate_synthetic, GeneratorConfig};
use handover_core::generator::PredictionContext;
use handover_core::impedance::{
    impedance_force, rollout, rollout_lag, step, EndEffectorState, Gripper, GraspConfig, HandoverParams, ImpedanceGains,
    ReceiverScenario, RolloutConfig, ScenarioKind, TargetState, Vec3, DEFAULT_MASS,
};
use handover_core::{KernelParams, SimilarityConfig};
use std::sync::OnceLock;

fn context() -> &'static PredictionContext {
    static CTX: OnceLock<PredictionContext> = OnceLock::new();
    CTX.get_or_init(|| {
        let data = generate_synthetic(&GeneratorConfig::with_counts(90, 10), 11).unwrap();
        PredictionContext::fit_with_kernel(&data, 0.4, KernelParams::default(), SimilarityConfig::default(), 3).unwrap()
    })
}

fn scenario(kind: ScenarioKind, seed: u64) -> ReceiverScenario {
    ReceiverScenario::generate(kind, seed, &GeneratorConfig::default()).unwrap()
}

/// Steady-state error while tracking a ramp without velocity feedforward.
fn ramp_error(stiffness: f64, damping: f64) -> f64 {
    let gains = ImpedanceGains::new(DEFAULT_MASS, damping, stiffness).unwrap();
    let speed = 0.3;
    let dt = 0.005;
    let mut s = EndEffectorState { x: Vec3::zeros(), v: Vec3::zeros(), gripper: Gripper::Holding, f_ext: Vec3::zeros() };
    let mut err = 0.0;
    for k in 0..2000 {
        let t = k as f64 * dt;
        let target = TargetState::fixed(Vec3::new(speed * t, 0.0, 0.0));
        err = target.x.x - s.x.x;
        let f = impedance_force(&gains, &target, &s, &Vec3::zeros());
        s = step(&s, &f, &Vec3::zeros(), gains.mass, dt).unwrap();
    }
    err
}

#[test]
fn stiffer_gains_track_a_ramp_more_closely() {
    for damping in [10.0, 15.0, 20.0] {
        let errors: Vec<f64> = [80.0, 100.0, 120.0, 140.0].iter().map(|k| ramp_error(*k, damping)).collect();
        assert!(errors.windows(2).all(|w| w[1] < w[0]), "{errors:?}");
        let expected = damping * 0.3 / 140.0;
        assert!((errors[3] - expected).abs() < 1e-3 * expected);
    }
}

#[test]
fn static_receiver_gets_the_object() {
    let r = rollout(context(), &HandoverParams::TUNED, &scenario(ScenarioKind::Static, 0), &RolloutConfig::default()).unwrap();
    assert!(r.released);
    let t = r.handover_time.unwrap();
    assert!(t > 0.0 && t < 15.0);
    assert!(r.samples.last().unwrap().f_ext.iter().map(|f| f * f).sum::<f64>().sqrt() > HandoverParams::TUNED.release_force);
}

#[test]
fn absent_receiver_times_out_without_release() {
    let r = rollout(context(), &HandoverParams::TUNED, &scenario(ScenarioKind::Absent, 0), &RolloutConfig::default()).unwrap();
    assert!(!r.released);
    assert!(r.handover_time.is_none());
    assert!(r.samples.iter().all(|s| s.gripper == Gripper::Holding));
    assert_eq!(r.samples.len(), 3000);
}

#[test]
fn rollouts_are_deterministic() {
    for kind in [ScenarioKind::Id, ScenarioKind::Ood] {
        let sc = scenario(kind, 3);
        let a = rollout(context(), &HandoverParams::TUNED, &sc, &RolloutConfig::default()).unwrap();
        let b = rollout(context(), &HandoverParams::TUNED, &sc, &RolloutConfig::default()).unwrap();
        assert_eq!(a, b);
        assert!(a.samples.iter().all(|s| s.ee.iter().all(|v| v.is_finite())));
    }
}

#[test]
fn forecasting_reduces_tracking_lag() {
    let config = RolloutConfig { grasp: GraspConfig { enabled: false, ..GraspConfig::default() }, timeout: 6.0, ..Default::default() };
    let sc = scenario(ScenarioKind::ConstantVelocity, 0);
    let lags: Vec<f64> = [0.0, 0.1, 0.2, 0.3]
        .iter()
        .map(|tf| {
            let params = HandoverParams { forecast_time: *tf, ..HandoverParams::TUNED };
            rollout_lag(&rollout(context(), &params, &sc, &config).unwrap(), config.control_dt, 1.5)
        })
        .collect();
    assert!(lags.windows(2).all(|w| w[1] < w[0]), "{lags:?}");
}

#[test]
fn invalid_params_are_rejected() {
    let sc = scenario(ScenarioKind::Static, 0);
    let bad = HandoverParams { stiffness: 200.0, ..HandoverParams::TUNED };
    assert!(rollout(context(), &bad, &sc, &RolloutConfig::default()).is_err());
}
