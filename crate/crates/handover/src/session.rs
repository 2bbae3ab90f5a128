//! Preference-session state machine shared by the HTTP service and the
//! offline simulator.

use std::sync::Arc;

use handover_core::cospar::{
    bowl_utility, select_query, synthetic_oracle, utility_rank, ActionGrid, CosparError, GridSpec, PreferenceConfig,
    PreferencePosterior, PreferenceRecord, PriorModel,
};
use handover_core::dataset::GeneratorConfig;
use handover_core::generator::PredictionContext;
use handover_core::impedance::{rollout, ImpedanceError, ReceiverScenario, RolloutConfig, ScenarioKind};
use handover_core::HandoverParams;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rollout_view::RolloutRecord;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("session is finished")]
    Finished,
    #[error("query {submitted} already answered; current query is {current}")]
    StaleQuery { submitted: usize, current: usize },
    #[error("iteration budget must be positive")]
    InvalidBudget,
    #[error(transparent)]
    Cospar(#[from] CosparError),
    #[error(transparent)]
    Rollout(#[from] ImpedanceError),
}

impl SessionError {
    /// Errors caused by the order of requests rather than by the server.
    pub fn is_conflict(&self) -> bool {
        matches!(self, Self::Finished | Self::StaleQuery { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    /// Preferences collected before the session reports its incumbent.
    pub budget: usize,
    /// Receiver scenario both candidates are rolled out on.
    pub scenario: ScenarioKind,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self { budget: 20, scenario: ScenarioKind::Id }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Choice {
    A,
    B,
}

#[derive(Debug, Clone, Serialize)]
pub struct Candidate {
    pub action: usize,
    pub params: HandoverParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rollout: Option<Arc<RolloutRecord>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Query {
    pub query_id: usize,
    pub scenario: ScenarioKind,
    pub scenario_seed: u64,
    pub a: Candidate,
    pub b: Candidate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub preferences: usize,
    pub incumbent_mean: f64,
    pub incumbent_std: f64,
    pub newton_iterations: usize,
    pub gradient_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalReport {
    pub incumbent_index: usize,
    pub incumbent: HandoverParams,
    pub posterior_summary: PosteriorSummary,
}

/// One fine-tuning run: posterior, the open query, and its RNG stream.
#[derive(Debug, Clone)]
pub struct PreferenceSession {
    id: String,
    seed: u64,
    rng: ChaCha8Rng,
    posterior: PreferencePosterior,
    query: Option<Query>,
    budget: usize,
}

impl PreferenceSession {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn posterior(&self) -> &PreferencePosterior {
        &self.posterior
    }

    pub fn query(&self) -> Option<&Query> {
        self.query.as_ref()
    }

    pub fn iteration(&self) -> usize {
        self.posterior.records().len()
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn is_done(&self) -> bool {
        self.iteration() >= self.budget
    }

    pub fn report(&self) -> FinalReport {
        let p = &self.posterior;
        let i = p.incumbent();
        FinalReport {
            incumbent_index: i,
            incumbent: p.grid().params(i),
            posterior_summary: PosteriorSummary {
                preferences: p.records().len(),
                incumbent_mean: p.mean()[i],
                incumbent_std: p.variance(i).max(0.0).sqrt(),
                newton_iterations: p.iterations(),
                gradient_norm: p.gradient_norm(),
            },
        }
    }
}

pub enum Outcome<'a> {
    Next(&'a Query),
    Done(FinalReport),
}

/// Everything a session needs that is shared between sessions.
pub struct PreferenceEngine {
    prior: Arc<PriorModel>,
    context: Option<Arc<PredictionContext>>,
    generator: GeneratorConfig,
    rollout: RolloutConfig,
    config: SessionConfig,
}

impl PreferenceEngine {
    pub fn new(
        grid: GridSpec,
        preference: PreferenceConfig,
        config: SessionConfig,
        context: Option<Arc<PredictionContext>>,
    ) -> Result<Self, SessionError> {
        if config.budget == 0 {
            return Err(SessionError::InvalidBudget);
        }
        let prior = PriorModel::new(ActionGrid::new(grid)?, preference)?;
        Ok(Self { prior, context, generator: GeneratorConfig::default(), rollout: RolloutConfig::default(), config })
    }

    pub fn with_rollouts(mut self, generator: GeneratorConfig, rollout: RolloutConfig) -> Self {
        self.generator = generator;
        self.rollout = rollout;
        self
    }

    pub fn prior(&self) -> &Arc<PriorModel> {
        &self.prior
    }

    pub fn grid(&self) -> &ActionGrid {
        self.prior.grid()
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn has_context(&self) -> bool {
        self.context.is_some()
    }

    pub fn create(&self, id: impl Into<String>, seed: u64) -> Result<PreferenceSession, SessionError> {
        let mut session = PreferenceSession {
            id: id.into(),
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            posterior: PreferencePosterior::empty(&self.prior),
            query: None,
            budget: self.config.budget,
        };
        self.open_query(&mut session)?;
        Ok(session)
    }

    fn open_query(&self, session: &mut PreferenceSession) -> Result<(), SessionError> {
        let query_seed = session.rng.next_u64();
        let scenario_seed = session.rng.next_u64();
        let (a, b) = select_query(&session.posterior, query_seed)?;
        let query_id = session.iteration();
        let kind = self.config.scenario;
        let candidate = |action: usize, tag: &str| -> Result<Candidate, SessionError> {
            let params = self.grid().params(action);
            let rollout = match &self.context {
                Some(ctx) => {
                    let scenario = ReceiverScenario::generate(kind, scenario_seed, &self.generator)?;
                    let result = rollout(ctx, &params, &scenario, &self.rollout)?;
                    Some(Arc::new(RolloutRecord::new(format!("{}-q{query_id}-{tag}", session.id), &result)))
                }
                None => None,
            };
            Ok(Candidate { action, params, rollout })
        };
        let query = Query { query_id, scenario: kind, scenario_seed, a: candidate(a, "a")?, b: candidate(b, "b")? };
        session.query = Some(query);
        Ok(())
    }

    /// Record the answer to the open query. `query_id`, when given, must
    /// name the open query so that a resubmission is detected.
    pub fn submit<'s>(
        &self,
        session: &'s mut PreferenceSession,
        choice: Choice,
        query_id: Option<usize>,
    ) -> Result<Outcome<'s>, SessionError> {
        let Some(query) = session.query.as_ref() else {
            return Err(SessionError::Finished);
        };
        if let Some(submitted) = query_id {
            if submitted != query.query_id {
                return Err(SessionError::StaleQuery { submitted, current: query.query_id });
            }
        }
        let record = match choice {
            Choice::A => PreferenceRecord::new(query.a.action, query.b.action),
            Choice::B => PreferenceRecord::new(query.b.action, query.a.action),
        };
        self.record(session, record)
    }

    fn record<'s>(&self, session: &'s mut PreferenceSession, record: PreferenceRecord) -> Result<Outcome<'s>, SessionError> {
        session.posterior = session.posterior.update(record)?;
        session.query = None;
        if session.is_done() {
            return Ok(Outcome::Done(session.report()));
        }
        self.open_query(session)?;
        Ok(Outcome::Next(session.query.as_ref().expect("query just opened")))
    }
}

/// Synthetic user for closed-loop runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    /// Utility peak.
    pub peak: HandoverParams,
    /// Bowl curvature on normalized coordinates.
    pub curvature: f64,
    /// Preference noise of the simulated user.
    pub noise: f64,
    /// An incumbent counts as a success when it ranks in this top fraction.
    pub top_fraction: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { peak: HandoverParams::TUNED, curvature: 2.0, noise: 0.2, top_fraction: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRun {
    pub seed: u64,
    pub incumbent_index: usize,
    pub incumbent: HandoverParams,
    pub utility_rank: usize,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub runs: Vec<SimulationRun>,
    pub iterations: usize,
    pub actions: usize,
    pub oracle: OracleConfig,
    pub success_rate: f64,
}

/// Drive one session to completion with the synthetic user. The session
/// uses `seed`; the user's coin flips use a separate stream from `seed`.
pub fn simulate_session(engine: &PreferenceEngine, seed: u64, utility: &[f64], oracle: &OracleConfig) -> Result<SimulationRun, SessionError> {
    let mut session = engine.create(format!("sim-{seed}"), seed)?;
    let mut user = ChaCha8Rng::seed_from_u64(seed);
    user.set_stream(1);
    loop {
        let query = session.query().expect("open query");
        let (a, b) = (query.a.action, query.b.action);
        let record = synthetic_oracle(a, b, utility[a], utility[b], oracle.noise, &mut user);
        let choice = if record.winner == a { Choice::A } else { Choice::B };
        if let Outcome::Done(report) = engine.submit(&mut session, choice, None)? {
            let rank = utility_rank(utility, report.incumbent_index);
            return Ok(SimulationRun {
                seed,
                incumbent_index: report.incumbent_index,
                incumbent: report.incumbent,
                utility_rank: rank,
                success: (rank as f64) < oracle.top_fraction * utility.len() as f64,
            });
        }
    }
}

/// Independent closed-loop runs with seeds `0..runs`.
pub fn simulate(engine: &PreferenceEngine, runs: usize, oracle: &OracleConfig) -> Result<SimulationReport, SessionError> {
    let utility = bowl_utility(engine.grid(), &oracle.peak, oracle.curvature);
    let runs: Vec<SimulationRun> =
        (0..runs as u64).into_par_iter().map(|seed| simulate_session(engine, seed, &utility, oracle)).collect::<Result<_, _>>()?;
    let success_rate = runs.iter().filter(|r| r.success).count() as f64 / runs.len().max(1) as f64;
    Ok(SimulationReport { iterations: engine.config.budget, actions: engine.grid().len(), oracle: *oracle, success_rate, runs })
}
