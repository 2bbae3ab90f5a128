use handover_core::dataset::{generate_synthetic, GeneratorConfig, Trajectory};
use handover_core::generator::{fit_flow_models, predict_trajectory, PredictionContext, PredictionSession};
use handover_core::{GiverPose, HandoverDataset, HandoverPair, KernelParams, Label, ObservedTrajectory, ReceiverPose, SimilarityConfig};
use std::sync::Arc;

const RATE: f64 = 30.0;

fn straight_pair(id: &str, heading: f64, n: usize, giver_z0: f64) -> HandoverPair {
    let receiver = Trajectory::from_poses(
        (0..n).map(|k| {
            let d = 3.0 - 2.5 * k as f64 / (n - 1) as f64;
            ReceiverPose::new(d * heading.cos(), d * heading.sin())
        }),
        RATE,
        0.0,
    )
    .unwrap();
    let giver =
        Trajectory::from_poses((0..n).map(|k| GiverPose::new(0.01 * k as f64, 0.0, giver_z0 + 0.002 * k as f64)), RATE, 0.0)
            .unwrap();
    HandoverPair::new(id.into(), Label::InDistribution, receiver, giver).unwrap()
}

fn context(pairs: Vec<HandoverPair>, k: usize) -> PredictionContext {
    let models = fit_flow_models(&pairs, 1.0, KernelParams::default()).unwrap();
    let pairs: Vec<Arc<HandoverPair>> = pairs.into_iter().map(Arc::new).collect();
    PredictionContext::new(pairs, models, SimilarityConfig::default(), k).unwrap()
}

#[test]
fn isolated_match_copies_its_giver_segment() {
    let own = straight_pair("own", 0.0, 90, 0.85);
    let far = straight_pair("far", std::f64::consts::PI, 90, 1.2);
    let ctx = context(vec![own.clone(), far], 1);
    let obs = ObservedTrajectory::from_prefix(&own.receiver, 40).unwrap();
    let pred = predict_trajectory(&ctx, &obs).unwrap();
    assert_eq!(pred.sources.len(), 1);
    assert_eq!(pred.sources[0].index, 0);
    assert_eq!(pred.sources[0].align, 39);
    assert_eq!(pred.horizon(), 90 - 39);
    for (j, p) in pred.poses.iter().enumerate() {
        assert_eq!(*p, own.giver.pose(39 + j));
    }
}

#[test]
fn identical_segments_average_to_themselves() {
    let a = straight_pair("a", 0.0, 90, 0.85);
    let mut b = a.clone();
    b.id = "b".into();
    let ctx = context(vec![a.clone(), b], 2);
    let obs = ObservedTrajectory::from_prefix(&a.receiver, 30).unwrap();
    let pred = predict_trajectory(&ctx, &obs).unwrap();
    let w: Vec<f64> = pred.weights().map(|(_, w)| w).collect();
    assert_eq!(w.len(), 2);
    assert!((w[0] - 0.5).abs() < 1e-12 && (w[1] - 0.5).abs() < 1e-12);
    for (j, p) in pred.poses.iter().enumerate() {
        let g = a.giver.pose(29 + j);
        assert!((p.x - g.x).abs() < 1e-12 && (p.y - g.y).abs() < 1e-12 && (p.z - g.z).abs() < 1e-12);
    }
}

#[test]
fn session_matches_stateless_on_synthetic_walks() {
    let data = generate_synthetic(&GeneratorConfig::with_counts(12, 3), 4).unwrap();
    let (train, test) = data.pairs().split_at(13);
    let ctx = PredictionContext::fit_with_kernel(
        &HandoverDataset::new(train.to_vec()).unwrap(),
        0.4,
        KernelParams::default(),
        SimilarityConfig::default(),
        3,
    )
    .unwrap();
    for pair in test {
        let mut session = PredictionSession::new(&ctx);
        for (i, s) in pair.receiver.samples().iter().enumerate() {
            session.push(s.t, s.pose).unwrap();
            if i % 7 == 0 {
                let obs = ObservedTrajectory::from_prefix(&pair.receiver, i + 1).unwrap();
                assert_eq!(session.predict().unwrap(), predict_trajectory(&ctx, &obs).unwrap());
            }
        }
    }
}
