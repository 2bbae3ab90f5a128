//! Trajectory data model shared by every stage of the pipeline.

mod folds;
mod synth;

pub use folds::{stratified_kfold, stratified_subsample, Fold};
pub use synth::{generate_one, generate_synthetic, has_pause, has_wander, GeneratorConfig};

#[allow(unused_imports)]
use num_traits::Float;
use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Scenes are desk scale; anything outside this box is a corrupted record.
pub const POSE_BOUND_M: f64 = 100.0;
/// Allowed deviation of a sample interval from `1 / sample_rate_hz`.
pub const SPACING_TOLERANCE_S: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DatasetError {
    #[error("trajectory has {len} samples, at least 2 are required")]
    TooShort { len: usize },
    #[error("sample rate must be positive, got {0}")]
    InvalidRate(f64),
    #[error("timestamps are not strictly increasing at sample {index}")]
    NonMonotonic { index: usize },
    #[error("sample interval at {index} deviates from 1/rate")]
    NonUniform { index: usize },
    #[error("pose at sample {index} is out of bounds or not finite")]
    InvalidPose { index: usize },
    #[error("pair {id}: receiver has {receiver} samples but giver has {giver}")]
    LengthMismatch { id: String, receiver: usize, giver: usize },
    #[error("pair {id}: receiver and giver timestamps differ at sample {index}")]
    Misaligned { id: String, index: usize },
    #[error("pair {id}: {source}")]
    InvalidPair {
        id: String,
        #[source]
        source: alloc::boxed::Box<DatasetError>,
    },
    #[error("duplicate pair id {0}")]
    DuplicateId(String),
    #[error("invalid generator config: {0}")]
    InvalidConfig(&'static str),
    #[error("need k >= 2 folds, got {0}")]
    InvalidFoldCount(usize),
    #[error("label {label:?} has {count} pairs, fewer than k = {k}")]
    InsufficientStratum { label: Label, count: usize, k: usize },
    #[error("subsample ratio must lie in (0, 1], got {0}")]
    InvalidRatio(f64),
}

/// Receiver base position in the global frame (meters).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ReceiverPose {
    pub x: f64,
    pub y: f64,
}

/// Giver wrist position in the global frame (meters, `z` above the floor).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GiverPose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl ReceiverPose {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn to_vector(self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    pub fn from_vector(v: Vector2<f64>) -> Self {
        Self::new(v.x, v.y)
    }

    pub fn distance(&self, other: &Self) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl GiverPose {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }
}

/// Pose types that can live in a [`Trajectory`].
pub trait Pose: Copy {
    fn is_valid(&self) -> bool;
}

impl Pose for ReceiverPose {
    fn is_valid(&self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.x.abs() <= POSE_BOUND_M
            && self.y.abs() <= POSE_BOUND_M
    }
}

impl Pose for GiverPose {
    fn is_valid(&self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.z.is_finite()
            && self.z >= 0.0
            && self.x.abs() <= POSE_BOUND_M
            && self.y.abs() <= POSE_BOUND_M
            && self.z <= POSE_BOUND_M
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample<P> {
    pub t: f64,
    pub pose: P,
}

/// Uniformly sampled, strictly time-ordered pose sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<P> {
    samples: Vec<Sample<P>>,
    sample_rate_hz: f64,
}

impl<P: Pose> Trajectory<P> {
    pub fn new(samples: Vec<Sample<P>>, sample_rate_hz: f64) -> Result<Self, DatasetError> {
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(DatasetError::InvalidRate(sample_rate_hz));
        }
        if samples.len() < 2 {
            return Err(DatasetError::TooShort { len: samples.len() });
        }
        let dt = 1.0 / sample_rate_hz;
        for (i, s) in samples.iter().enumerate() {
            if !s.t.is_finite() || !s.pose.is_valid() {
                return Err(DatasetError::InvalidPose { index: i });
            }
            if i > 0 {
                let step = s.t - samples[i - 1].t;
                if step <= 0.0 {
                    return Err(DatasetError::NonMonotonic { index: i });
                }
                if (step - dt).abs() > SPACING_TOLERANCE_S {
                    return Err(DatasetError::NonUniform { index: i });
                }
            }
        }
        Ok(Self { samples, sample_rate_hz })
    }

    /// Build from poses sampled at `k / rate` starting at `t0`.
    pub fn from_poses(
        poses: impl IntoIterator<Item = P>,
        sample_rate_hz: f64,
        t0: f64,
    ) -> Result<Self, DatasetError> {
        let samples = poses
            .into_iter()
            .enumerate()
            .map(|(k, pose)| Sample { t: t0 + k as f64 / sample_rate_hz, pose })
            .collect();
        Self::new(samples, sample_rate_hz)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate_hz
    }

    pub fn samples(&self) -> &[Sample<P>] {
        &self.samples
    }

    pub fn pose(&self, index: usize) -> P {
        self.samples[index].pose
    }

    pub fn poses(&self) -> impl ExactSizeIterator<Item = P> + '_ {
        self.samples.iter().map(|s| s.pose)
    }

    pub fn times(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.t)
    }

    pub fn duration(&self) -> f64 {
        self.samples[self.samples.len() - 1].t - self.samples[0].t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "ID")]
    InDistribution,
    #[serde(rename = "OOD")]
    OutOfDistribution,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::InDistribution, Label::OutOfDistribution];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::InDistribution => "ID",
            Label::OutOfDistribution => "OOD",
        }
    }
}

/// One recorded handover: what the receiver did and what the giver's wrist did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandoverPair {
    pub id: String,
    pub label: Label,
    pub receiver: Trajectory<ReceiverPose>,
    pub giver: Trajectory<GiverPose>,
}

impl HandoverPair {
    pub fn new(
        id: String,
        label: Label,
        receiver: Trajectory<ReceiverPose>,
        giver: Trajectory<GiverPose>,
    ) -> Result<Self, DatasetError> {
        if receiver.len() != giver.len() {
            return Err(DatasetError::LengthMismatch {
                id,
                receiver: receiver.len(),
                giver: giver.len(),
            });
        }
        if let Some(index) = receiver
            .times()
            .zip(giver.times())
            .position(|(a, b)| (a - b).abs() > SPACING_TOLERANCE_S)
        {
            return Err(DatasetError::Misaligned { id, index });
        }
        Ok(Self { id, label, receiver, giver })
    }

    pub fn len(&self) -> usize {
        self.receiver.len()
    }

    pub fn is_empty(&self) -> bool {
        self.receiver.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HandoverDataset {
    pairs: Vec<HandoverPair>,
}

impl HandoverDataset {
    pub fn new(pairs: Vec<HandoverPair>) -> Result<Self, DatasetError> {
        let mut seen = BTreeSet::new();
        for p in &pairs {
            if !seen.insert(p.id.as_str()) {
                return Err(DatasetError::DuplicateId(p.id.clone()));
            }
        }
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[HandoverPair] {
        &self.pairs
    }

    pub fn into_pairs(self) -> Vec<HandoverPair> {
        self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.pairs.iter().filter(|p| p.label == label).count()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.pairs.iter().map(|p| p.label).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn line(n: usize, rate: f64) -> Trajectory<ReceiverPose> {
        Trajectory::from_poses((0..n).map(|i| ReceiverPose::new(i as f64 * 0.01, 0.0)), rate, 0.0)
            .unwrap()
    }

    #[test]
    fn trajectory_invariants() {
        assert_eq!(
            Trajectory::<ReceiverPose>::from_poses([ReceiverPose::default()], 30.0, 0.0),
            Err(DatasetError::TooShort { len: 1 })
        );
        assert!(matches!(
            Trajectory::<ReceiverPose>::from_poses([ReceiverPose::default(); 3], 0.0, 0.0),
            Err(DatasetError::InvalidRate(_))
        ));
        let s = |t| Sample { t, pose: ReceiverPose::default() };
        assert_eq!(
            Trajectory::new(vec![s(0.0), s(0.1), s(0.1)], 10.0),
            Err(DatasetError::NonMonotonic { index: 2 })
        );
        assert_eq!(
            Trajectory::new(vec![s(0.0), s(0.1), s(0.25)], 10.0),
            Err(DatasetError::NonUniform { index: 2 })
        );
        let bad = Trajectory::from_poses([GiverPose::new(0.0, 0.0, -0.1); 2], 10.0, 0.0);
        assert_eq!(bad, Err(DatasetError::InvalidPose { index: 0 }));
        let far = Trajectory::from_poses([ReceiverPose::new(101.0, 0.0); 2], 10.0, 0.0);
        assert!(far.is_err());
        assert_eq!(line(5, 30.0).len(), 5);
    }

    #[test]
    fn pair_requires_aligned_lengths() {
        let r = line(4, 30.0);
        let g = Trajectory::from_poses([GiverPose::new(0.0, 0.0, 1.0); 3], 30.0, 0.0).unwrap();
        assert!(matches!(
            HandoverPair::new("a".into(), Label::InDistribution, r.clone(), g),
            Err(DatasetError::LengthMismatch { .. })
        ));
        let g = Trajectory::from_poses([GiverPose::new(0.0, 0.0, 1.0); 4], 30.0, 1.0).unwrap();
        assert!(matches!(
            HandoverPair::new("a".into(), Label::InDistribution, r, g),
            Err(DatasetError::Misaligned { index: 0, .. })
        ));
    }

    #[test]
    fn dataset_rejects_duplicate_ids() {
        let r = line(3, 30.0);
        let g = Trajectory::from_poses([GiverPose::new(0.0, 0.0, 1.0); 3], 30.0, 0.0).unwrap();
        let p = HandoverPair::new("x".into(), Label::InDistribution, r, g).unwrap();
        assert_eq!(
            HandoverDataset::new(vec![p.clone(), p]),
            Err(DatasetError::DuplicateId("x".into()))
        );
    }
}
