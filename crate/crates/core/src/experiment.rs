//! Headless synthetic sessions: a psychometric operator drives both robots
//! with the autopilot, reports inferences, and takes AI advice with a fixed
//! reliance probability.

use std::path::PathBuf;

use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{fit_operator_informativeness, synthetic_infer, AgentError, AiDssModel, Calibration, SyntheticOperator};
use crate::fusion::StrategyId;
use crate::session::{
    stream_rng, EventBody, EventLog, Recorder, SessionConfig, SessionError, TrialRecord, VirtualClock,
};
use crate::sim::{all_environments, autopilot_commands, make_environment, run_trial_segment, VelocityCommand, TICK_MS};
use crate::types::{Inference, RobotId};

const STREAM_OPERATOR: u64 = 10;
const FIT_SEED: u64 = 0x5eed;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Session(#[from] SessionError),
}

/// Either explicit operator parameters or a target AUROC2 to fit λ against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OperatorSpec {
    Target { target_auroc2: f64 },
    Params(SyntheticOperator),
}

impl Default for OperatorSpec {
    fn default() -> Self {
        OperatorSpec::Params(SyntheticOperator::default())
    }
}

impl OperatorSpec {
    pub fn resolve(&self) -> Result<SyntheticOperator, ExperimentError> {
        match *self {
            OperatorSpec::Params(op) => {
                op.validate()?;
                Ok(op)
            }
            OperatorSpec::Target { target_auroc2 } => Ok(SyntheticOperator {
                informativeness: fit_operator_informativeness(target_auroc2, FIT_SEED)?,
                ..SyntheticOperator::default()
            }),
        }
    }
}

/// `"well"`, `"poor"`, `"mixed"` (alternating by session index), or
/// `{"table_file": ..., "calibration": ...}` naming an ingested table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DssSpec {
    Label(DssLabel),
    TableFile { table_file: PathBuf, calibration: Calibration },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DssLabel {
    Well,
    Poor,
    Mixed,
}

impl Default for DssSpec {
    fn default() -> Self {
        DssSpec::Label(DssLabel::Well)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_sessions: u32,
    pub seed: u64,
    pub operator: OperatorSpec,
    pub dss_calibration: DssSpec,
    pub strategies: Vec<StrategyId>,
    pub output_dir: PathBuf,
    /// Probability that the operator adopts a disagreeing, more confident AI.
    pub advice_reliance: f64,
    /// Per-session protocol; its `seed` is replaced by the derived one.
    pub session: SessionConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_sessions: 10,
            seed: 0,
            operator: OperatorSpec::default(),
            dss_calibration: DssSpec::default(),
            strategies: StrategyId::ALL.to_vec(),
            output_dir: PathBuf::from("out"),
            advice_reliance: 0.5,
            session: SessionConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.n_sessions == 0 {
            return Err(ExperimentError::Invalid("n_sessions must be at least 1".into()));
        }
        if self.strategies.is_empty() {
            return Err(ExperimentError::Invalid("strategies must not be empty".into()));
        }
        if !(0.0..=1.0).contains(&self.advice_reliance) {
            return Err(ExperimentError::Invalid("advice_reliance must lie in [0, 1]".into()));
        }
        match self.operator {
            OperatorSpec::Params(op) => op.validate()?,
            OperatorSpec::Target { target_auroc2 } if !(0.5..=0.75).contains(&target_auroc2) => {
                return Err(AgentError::Unachievable(target_auroc2).into())
            }
            OperatorSpec::Target { .. } => {}
        }
        self.session.validate()?;
        Ok(())
    }
}

/// Seed of session `index`, from a stream disjoint from every other index.
pub fn session_seed(seed: u64, index: u32) -> u64 {
    stream_rng(seed, 1_000 + u64::from(index)).next_u64()
}

pub fn session_id(index: u32) -> String {
    format!("s{index:04}")
}

/// Autopilot command streams for all 24 environments.
#[derive(Debug, Clone)]
pub struct PilotCache {
    commands: Vec<Vec<VelocityCommand<f64>>>,
    time_limit_ms: u32,
}

impl PilotCache {
    pub fn new(time_limit_ms: u32) -> Self {
        let commands = all_environments()
            .map(|(s, g)| autopilot_commands(&make_environment::<f64>(s, g).expect("valid environment"), time_limit_ms))
            .collect();
        Self { commands, time_limit_ms }
    }

    pub fn commands(&self, env: (usize, usize)) -> &[VelocityCommand<f64>] {
        &self.commands[env.0 * crate::sim::N_GAPS + env.1]
    }

    pub fn time_limit_ms(&self) -> u32 {
        self.time_limit_ms
    }
}

#[derive(Debug, Clone)]
pub struct SessionRun {
    pub index: u32,
    pub id: String,
    pub calibration: Calibration,
    pub log: EventLog,
    pub records: Vec<TrialRecord>,
}

/// Advice taking: on disagreement, when the AI is strictly more confident,
/// adopt its choice and confidence with probability `reliance`.
fn final_decision<R: Rng + ?Sized>(initial: Inference, ai: Inference, reliance: f64, rng: &mut R) -> Option<Inference> {
    let tempted = ai.choice != initial.choice && ai.confidence > initial.confidence;
    (tempted && rng.random_bool(reliance)).then_some(ai)
}

/// Runs one complete session end to end and seals its log.
pub fn run_synthetic_session(
    id: &str,
    config: SessionConfig,
    dss: AiDssModel,
    operator: &SyntheticOperator,
    reliance: f64,
    pilots: &PilotCache,
) -> Result<(EventLog, Vec<TrialRecord>), SessionError> {
    let limit = config.segment_time_limit_ms;
    let mut op_rng = stream_rng(config.seed, STREAM_OPERATOR);
    let mut rec = Recorder::create(id, config, dss, VirtualClock::default())?;
    let own_pilots;
    let pilots = if pilots.time_limit_ms() == limit {
        pilots
    } else {
        own_pilots = PilotCache::new(limit);
        &own_pilots
    };

    while !rec.session().is_done() {
        for robot in [RobotId::A, RobotId::B] {
            let cur = rec.session().current();
            let arena = make_environment::<f64>(cur.env.0, cur.env.1).expect("scheduled environments are valid");
            let traj = run_trial_segment(&arena, cur.delays.delay_for(robot), pilots.commands(cur.env), limit)
                .expect("autopilot commands are valid");
            rec.clock_mut().advance_ms((traj.elapsed_ticks * u64::from(TICK_MS)) as i64);
            rec.apply(EventBody::SegmentComplete {
                robot,
                reached_goal: traj.reached_goal,
                elapsed_ticks: traj.elapsed_ticks,
            })?;
        }
        let cur = rec.session().current();
        let initial = synthetic_infer(operator, f64::from(cur.delays.differential_ms()), cur.truth, &mut op_rng);
        rec.apply(EventBody::InitialInference(initial))?;
        let ai = rec.session().revealed_ai().expect("AI revealed after the initial inference");
        rec.apply(EventBody::AiRevealed(ai))?;
        match final_decision(initial, ai, reliance, &mut op_rng) {
            Some(fin) => {
                rec.apply(EventBody::RequestChange {})?;
                rec.apply(EventBody::FinalInference(fin))?;
            }
            None => {
                rec.apply(EventBody::KeepInitial {})?;
            }
        }
        rec.apply(EventBody::NextTrial {})?;
    }
    rec.finish()?;
    let (session, log) = rec.into_parts();
    Ok((log, session.records().to_vec()))
}

/// DSS used by session `index` under a label.
pub fn dss_for_session(label: DssLabel, index: u32) -> AiDssModel {
    let cal = match label {
        DssLabel::Well => Calibration::Well,
        DssLabel::Poor => Calibration::Poor,
        DssLabel::Mixed if index % 2 == 0 => Calibration::Well,
        DssLabel::Mixed => Calibration::Poor,
    };
    AiDssModel::builtin(cal)
}

/// Runs every session of an experiment in parallel; results come back in
/// session order. `dss_of` maps a session index to its decision-support
/// model.
pub fn run_experiment<F>(config: &ExperimentConfig, dss_of: F) -> Result<Vec<SessionRun>, ExperimentError>
where
    F: Fn(u32) -> AiDssModel + Sync,
{
    config.validate()?;
    let operator = config.operator.resolve()?;
    let pilots = PilotCache::new(config.session.segment_time_limit_ms);
    (0..config.n_sessions)
        .into_par_iter()
        .map(|index| {
            let id = session_id(index);
            let dss = dss_of(index);
            let calibration = dss.calibration();
            let session_cfg = SessionConfig { seed: session_seed(config.seed, index), ..config.session.clone() };
            let (log, records) =
                run_synthetic_session(&id, session_cfg, dss, &operator, config.advice_reliance, &pilots)?;
            Ok(SessionRun { index, id, calibration, log, records })
        })
        .collect()
}
