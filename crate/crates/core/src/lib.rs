//! Numerical core for receiver-conditioned robot-to-human handover.
//!
//! The crate is `no_std` (with `alloc`) and holds every piece of the pipeline
//! that is pure computation:
//!
//! * [`dataset`]: trajectory types, the synthetic handover generator and
//!   stratified fold assignment.
//! * [`spgp`]: per-trajectory flow functions (pose to velocity) fitted with a
//!   sparse pseudo-input Gaussian process.
//! * [`similarity`]: trajectory distance and similarity against stored flows.
//! * [`generator`]: similarity-weighted giver trajectory prediction and the
//!   temporal ensemble used to smooth targets.
//! * [`impedance`]: Cartesian impedance law, point-mass plant and closed-loop
//!   handover rollouts with force-threshold release.
//! * [`cospar`]: Gaussian-process preference learning over the handover
//!   parameter grid.
//!
//! IO, timing, threading and the CLI live in the `handover` crate.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod cospar;
pub mod dataset;
pub mod generator;
pub mod impedance;
pub mod linalg;
pub mod math;
pub mod similarity;
pub mod spgp;

pub use dataset::{GiverPose, HandoverDataset, HandoverPair, Label, ReceiverPose, Trajectory};
pub use generator::{EnsembleBuffer, PredictedTrajectory, PredictionContext, PredictionSession};
pub use impedance::{HandoverParams, RolloutResult};
pub use similarity::{ObservedTrajectory, SimilarityConfig};
pub use spgp::{FlowModel, KernelParams};
