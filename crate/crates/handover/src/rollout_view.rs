//! Flat JSON form of a rollout, as served to the browser console.

use handover_core::impedance::{RolloutResult, ScenarioKind};
use handover_core::HandoverParams;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub id: String,
    pub scenario: ScenarioKind,
    pub seed: u64,
    pub params: HandoverParams,
    pub t: Vec<f64>,
    pub target: Vec<[f64; 3]>,
    pub ee: Vec<[f64; 3]>,
    pub receiver: Vec<[f64; 2]>,
    pub release_t: Option<f64>,
    pub grasp_t: Option<f64>,
    pub tracking_rmse: f64,
    pub max_force: f64,
}

impl RolloutRecord {
    pub fn new(id: impl Into<String>, r: &RolloutResult) -> Self {
        Self {
            id: id.into(),
            scenario: r.scenario,
            seed: r.seed,
            params: r.params,
            t: r.samples.iter().map(|s| s.t).collect(),
            target: r.samples.iter().map(|s| s.target).collect(),
            ee: r.samples.iter().map(|s| s.ee).collect(),
            receiver: r.samples.iter().map(|s| s.receiver).collect(),
            release_t: r.handover_time,
            grasp_t: r.grasp_time,
            tracking_rmse: r.tracking_rmse,
            max_force: r.max_force,
        }
    }

    pub fn released(&self) -> bool {
        self.release_t.is_some()
    }
}

/// Parse `K=114.3,B=17.1,tf=0.14,fr=7.1`; omitted keys keep the tuned values.
pub fn parse_params(text: &str) -> Result<HandoverParams, String> {
    let mut p = HandoverParams::TUNED;
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (key, value) = item.split_once('=').ok_or_else(|| format!("expected key=value, got {item:?}"))?;
        let v: f64 = value.trim().parse().map_err(|_| format!("bad number in {item:?}"))?;
        match key.trim() {
            "K" | "k" | "stiffness" => p.stiffness = v,
            "B" | "b" | "damping" => p.damping = v,
            "tf" | "t_f" | "forecast_time" => p.forecast_time = v,
            "fr" | "f_r" | "release_force" => p.release_force = v,
            other => return Err(format!("unknown parameter {other:?}")),
        }
    }
    p.validate().map_err(|e| e.to_string())?;
    Ok(p)
}
