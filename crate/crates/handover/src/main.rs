use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use handover::config::ToolkitConfig;
use handover::eval::{run_kfold_eval, run_sample_efficiency, run_tradeoff, Pipeline};
use handover::rollout_view::{parse_params, RolloutRecord};
use handover::service::{serve, AppState};
use handover::session::{simulate, OracleConfig, PreferenceEngine};
use handover::{configure_threads, io};
use handover_core::dataset::generate_synthetic;
use handover_core::generator::PredictionContext;
use handover_core::impedance::{rollout, ReceiverScenario, ScenarioKind};
use handover_core::HandoverDataset;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "handover", version, about = "Dynamic handover prediction, simulation and preference tuning")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic handover dataset.
    GenData {
        #[arg(long)]
        n_id: Option<usize>,
        #[arg(long)]
        n_ood: Option<usize>,
        #[arg(long)]
        rate: Option<f64>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Prediction benchmarks.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Simulate one handover and write the rollout as JSON.
    Rollout {
        /// Handover parameters, e.g. K=114.3,B=17.1,tf=0.14,fr=7.1.
        #[arg(long, default_value = "")]
        params: String,
        #[arg(long, value_enum, default_value = "id")]
        scenario: Scenario,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Preference learning.
    #[command(subcommand)]
    Prefs(PrefsCommand),
    /// Serve the preference console API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[command(flatten)]
        data: DataArgs,
        /// Session event log; replayed on start if it exists.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the default configuration.
    Config,
}

#[derive(Args)]
struct DataArgs {
    /// Dataset file; a synthetic dataset from the config is used when absent.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 7)]
    data_seed: u64,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    inducing: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    neighbors: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Stratified k-fold RMS.
    Kfold {
        #[command(flatten)]
        common: EvalArgs,
        #[arg(long)]
        k: Option<usize>,
    },
    /// RMS against training-set fraction.
    SampleEff {
        #[command(flatten)]
        common: EvalArgs,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        ratios: Option<Vec<f64>>,
    },
    /// RMS and latency against inducing ratio.
    Tradeoff {
        #[command(flatten)]
        common: EvalArgs,
        #[arg(long, value_delimiter = ',')]
        ratios: Option<Vec<f64>>,
    },
}

#[derive(Subcommand)]
enum PrefsCommand {
    /// Closed-loop runs against a synthetic user.
    Simulate {
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long, default_value_t = 50)]
        seeds: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Scenario {
    Id,
    Ood,
    Static,
    Absent,
    ConstantVelocity,
}

impl From<Scenario> for ScenarioKind {
    fn from(s: Scenario) -> Self {
        match s {
            Scenario::Id => ScenarioKind::Id,
            Scenario::Ood => ScenarioKind::Ood,
            Scenario::Static => ScenarioKind::Static,
            Scenario::Absent => ScenarioKind::Absent,
            Scenario::ConstantVelocity => ScenarioKind::ConstantVelocity,
        }
    }
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => io::write_json(value, path)?,
        None => println!("{}", serde_json::to_string_pretty(value)?),
    }
    Ok(())
}

fn load_data(args: &DataArgs, config: &ToolkitConfig) -> Result<HandoverDataset> {
    match &args.data {
        Some(path) => Ok(io::load(path)?),
        None => Ok(generate_synthetic(&config.generator, args.data_seed)?),
    }
}

fn fit_context(data: &HandoverDataset, config: &ToolkitConfig) -> Result<PredictionContext> {
    PredictionContext::fit(data, &config.flow, config.similarity, config.prediction.k_neighbors).context("fitting flow models")
}

fn pipeline(config: &ToolkitConfig, args: &EvalArgs) -> Pipeline {
    let mut p = Pipeline::from_config(config);
    if let Some(r) = args.inducing {
        p.flow.inducing_ratio = r;
    }
    if let Some(k) = args.kappa {
        p.similarity.kappa = k;
    }
    if let Some(n) = args.neighbors {
        p.k_neighbors = n;
    }
    p
}

fn run_eval(cmd: EvalCommand, config: &ToolkitConfig) -> Result<()> {
    let mut eval = config.eval.clone();
    match cmd {
        EvalCommand::Kfold { common, k } => {
            eval.k_folds = k.unwrap_or(eval.k_folds);
            eval.seed = common.seed.unwrap_or(eval.seed);
            let data = io::load(&common.data)?;
            let report = run_kfold_eval(&data, &pipeline(config, &common), &eval)?;
            emit(&report, common.out.as_deref())
        }
        EvalCommand::SampleEff { common, k, ratios } => {
            eval.k_folds = k.unwrap_or(eval.k_folds);
            eval.seed = common.seed.unwrap_or(eval.seed);
            eval.data_ratios = ratios.unwrap_or(eval.data_ratios);
            let data = io::load(&common.data)?;
            let report = run_sample_efficiency(&data, &pipeline(config, &common), &eval)?;
            emit(&report, common.out.as_deref())
        }
        EvalCommand::Tradeoff { common, ratios } => {
            eval.seed = common.seed.unwrap_or(eval.seed);
            eval.inducing_ratios = ratios.unwrap_or(eval.inducing_ratios);
            let data = io::load(&common.data)?;
            let report = run_tradeoff(&data, &pipeline(config, &common), &eval)?;
            emit(&report, common.out.as_deref())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    configure_threads().map_err(anyhow::Error::msg)?;
    let config = ToolkitConfig::load_or_default(cli.config.as_deref())?;
    match cli.command {
        Command::GenData { n_id, n_ood, rate, seed, out } => {
            let mut g = config.generator.clone();
            g.n_id = n_id.unwrap_or(g.n_id);
            g.n_ood = n_ood.unwrap_or(g.n_ood);
            g.sample_rate_hz = rate.unwrap_or(g.sample_rate_hz);
            let data = generate_synthetic(&g, seed)?;
            io::save(&data, &out)?;
            eprintln!("wrote {} pairs to {}", data.len(), out.display());
            Ok(())
        }
        Command::Eval(cmd) => run_eval(cmd, &config),
        Command::Rollout { params, scenario, seed, data, out } => {
            let params = parse_params(&params).map_err(anyhow::Error::msg)?;
            let ctx = fit_context(&load_data(&data, &config)?, &config)?;
            let scenario = ReceiverScenario::generate(scenario.into(), seed, &config.generator)?;
            let result = rollout(&ctx, &params, &scenario, &config.rollout)?;
            emit(&RolloutRecord::new(format!("{}-{seed}", scenario.kind.as_str()), &result), out.as_deref())
        }
        Command::Prefs(PrefsCommand::Simulate { iters, seeds, out }) => {
            let mut session = config.session;
            session.budget = iters.unwrap_or(session.budget);
            let engine = PreferenceEngine::new(config.grid.clone(), config.preference, session, None)?;
            let report = simulate(&engine, seeds, &OracleConfig::default())?;
            eprintln!("success rate {:.3} over {} runs", report.success_rate, report.runs.len());
            emit(&report, out.as_deref())
        }
        Command::Serve { port, data, log, seed } => {
            let engine = match &data.data {
                Some(path) if !path.exists() => bail!("{}: no such file", path.display()),
                _ => {
                    let ctx = Arc::new(fit_context(&load_data(&data, &config)?, &config)?);
                    PreferenceEngine::new(config.grid.clone(), config.preference, config.session, Some(ctx))?
                        .with_rollouts(config.generator.clone(), config.rollout)
                }
            };
            let mut state = AppState::new(Some(Arc::new(engine)), seed);
            if let Some(log) = &log {
                if log.exists() {
                    let n = state.replay(log).map_err(anyhow::Error::msg)?;
                    eprintln!("replayed {n} sessions from {}", log.display());
                }
                state = state.with_log(log)?;
            }
            let state = Arc::new(state);
            eprintln!("listening on port {port}");
            tokio::runtime::Runtime::new()?.block_on(serve(state, port))?;
            Ok(())
        }
        Command::Config => {
            print!("{}", config.to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
