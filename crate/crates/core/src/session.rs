//! Trial-flow state machine, event log and deterministic replay.
//!
//! A session runs `n_practice` practice trials and then `n_trials` scored
//! trials. Each trial walks
//!
//! ```text
//! TeleopA -> TeleopB -> InitialInference -> AiReveal -> ChangeDecision
//!     ChangeDecision --keep--> Resolution
//!     ChangeDecision --change--> FinalInference -> Resolution
//! Resolution -> TeleopA (next trial) | Done
//! ```
//!
//! All randomness is drawn from per-purpose ChaCha streams seeded from the
//! session seed, so replaying the logged inputs reproduces every record.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, BufRead, Write};

use chrono::{DateTime, SecondsFormat, TimeDelta, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agents::{ai_infer, AiDssModel, Calibration};
use crate::fusion::{dummy_low_confidence, dummy_random, mcs, ts_choose, ts_update, BanditState, StrategyId, TiePolicy};
use crate::sim::{all_environments, make_environment, Arena};
use crate::staircase::{assign_delays, DelayAssignment, DifficultyLevel, StaircaseState};
use crate::types::{Inference, RobotId};

/// Event log schema version.
pub const LOG_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("event `{event}` is not allowed in phase {phase}")]
    ProtocolViolation { phase: Phase, event: &'static str },
    #[error("confidence {0} outside 1..=4")]
    InvalidConfidence(i64),
    #[error("invalid session config: {0}")]
    InvalidConfig(String),
    #[error("logged {what} diverges from the recomputed value")]
    Divergence { what: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StaircaseDriver {
    #[default]
    InitialInference,
    FinalInference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub n_practice: u32,
    pub n_trials: u32,
    pub likert_min: u8,
    pub likert_max: u8,
    pub segment_time_limit_ms: u32,
    pub exclusion_min_accuracy: f64,
    pub exclusion_same_conf_max: u32,
    pub seed: u64,
    pub staircase_driver: StaircaseDriver,
    pub tie_policy: TiePolicy,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            n_practice: 5,
            n_trials: 100,
            likert_min: 1,
            likert_max: 4,
            segment_time_limit_ms: 30_000,
            exclusion_min_accuracy: 0.65,
            exclusion_same_conf_max: 95,
            seed: 0,
            staircase_driver: StaircaseDriver::default(),
            tie_policy: TiePolicy::default(),
        }
    }
}

impl SessionConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        let bad = |m: &str| Err(SessionError::InvalidConfig(m.to_string()));
        if self.n_trials == 0 {
            return bad("n_trials must be positive");
        }
        if (self.likert_min, self.likert_max) != (1, 4) {
            return bad("confidence scale is fixed at 1..=4");
        }
        if self.segment_time_limit_ms == 0 {
            return bad("segment_time_limit_ms must be positive");
        }
        if !(0.0..=1.0).contains(&self.exclusion_min_accuracy) {
            return bad("exclusion_min_accuracy must lie in [0, 1]");
        }
        if self.exclusion_same_conf_max == 0 {
            return bad("exclusion_same_conf_max must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    TeleopA,
    TeleopB,
    InitialInference,
    AiReveal,
    ChangeDecision,
    FinalInference,
    Resolution,
    Done,
}

impl Phase {
    pub fn is_teleop(self) -> bool {
        matches!(self, Phase::TeleopA | Phase::TeleopB)
    }

    pub fn teleop_robot(self) -> Option<RobotId> {
        match self {
            Phase::TeleopA => Some(RobotId::A),
            Phase::TeleopB => Some(RobotId::B),
            _ => None,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SegmentOutcome {
    pub reached_goal: bool,
    pub elapsed_ticks: u64,
}

/// Inputs that drive a session. Serialized as the `kind`/`payload` pair of a
/// log line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum EventBody {
    SessionCreated { config: SessionConfig, dss: AiDssModel },
    SegmentComplete { robot: RobotId, reached_goal: bool, elapsed_ticks: u64 },
    InitialInference(Inference),
    AiRevealed(Inference),
    KeepInitial {},
    RequestChange {},
    FinalInference(Inference),
    NextTrial {},
    SessionDone { records_sha256: String },
}

impl EventBody {
    pub fn kind(&self) -> &'static str {
        match self {
            EventBody::SessionCreated { .. } => "session_created",
            EventBody::SegmentComplete { .. } => "segment_complete",
            EventBody::InitialInference(_) => "initial_inference",
            EventBody::AiRevealed(_) => "ai_revealed",
            EventBody::KeepInitial {} => "keep_initial",
            EventBody::RequestChange {} => "request_change",
            EventBody::FinalInference(_) => "final_inference",
            EventBody::NextTrial {} => "next_trial",
            EventBody::SessionDone { .. } => "session_done",
        }
    }
}

/// One line of the JSON-lines event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub ts: String,
    pub session: String,
    #[serde(flatten)]
    pub body: EventBody,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyResult {
    pub choice: RobotId,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub session_id: String,
    pub trial_index: u32,
    pub env: (usize, usize),
    pub delays: DelayAssignment,
    pub level: DifficultyLevel,
    pub truth: RobotId,
    pub human_initial: Inference,
    pub ai: Inference,
    pub changed: bool,
    pub human_final: Inference,
    pub outcomes: BTreeMap<StrategyId, StrategyResult>,
    pub segments: [SegmentOutcome; 2],
    pub calibration: Calibration,
    pub started_at: String,
    pub resolved_at: String,
}

impl TrialRecord {
    pub fn disagreement(&self) -> bool {
        self.human_initial.choice != self.ai.choice
    }

    pub fn initial_correct(&self) -> bool {
        self.human_initial.choice == self.truth
    }

    pub fn final_correct(&self) -> bool {
        self.human_final.choice == self.truth
    }

    pub fn ai_correct(&self) -> bool {
        self.ai.choice == self.truth
    }

    pub fn differential_ms(&self) -> u32 {
        self.delays.differential_ms()
    }
}

/// State of the trial currently being run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialInProgress {
    pub practice: bool,
    pub number: u32,
    pub env: (usize, usize),
    pub delays: DelayAssignment,
    pub level: DifficultyLevel,
    pub truth: RobotId,
    pub segments: [Option<SegmentOutcome>; 2],
    pub human_initial: Option<Inference>,
    pub ai: Option<Inference>,
    pub human_final: Option<Inference>,
    pub started_at: String,
    pub record: Option<TrialRecord>,
}

const STREAM_ENV: u64 = 1;
const STREAM_DELAY: u64 = 2;
const STREAM_AI: u64 = 3;
const STREAM_FUSION: u64 = 4;

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone)]
pub struct Session {
    id: String,
    config: SessionConfig,
    dss: AiDssModel,
    phase: Phase,
    staircase: StaircaseState,
    bandit: BanditState,
    env_rng: ChaCha8Rng,
    delay_rng: ChaCha8Rng,
    ai_rng: ChaCha8Rng,
    fusion_rng: ChaCha8Rng,
    schedule: Vec<(usize, usize)>,
    trials_started: u32,
    current: TrialInProgress,
    records: Vec<TrialRecord>,
    practice_records: Vec<TrialRecord>,
}

impl Session {
    pub fn new(id: impl Into<String>, config: SessionConfig, dss: AiDssModel, ts: &str) -> Result<Self, SessionError> {
        config.validate()?;
        let seed = config.seed;
        let mut s = Self {
            id: id.into(),
            config,
            dss,
            phase: Phase::TeleopA,
            staircase: StaircaseState::new(),
            bandit: BanditState::default(),
            env_rng: stream_rng(seed, STREAM_ENV),
            delay_rng: stream_rng(seed, STREAM_DELAY),
            ai_rng: stream_rng(seed, STREAM_AI),
            fusion_rng: stream_rng(seed, STREAM_FUSION),
            schedule: Vec::new(),
            trials_started: 0,
            current: placeholder_trial(),
            records: Vec::new(),
            practice_records: Vec::new(),
        };
        s.current = s.begin_trial(ts);
        Ok(s)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn dss(&self) -> &AiDssModel {
        &self.dss
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn staircase(&self) -> StaircaseState {
        self.staircase
    }

    pub fn bandit(&self) -> BanditState {
        self.bandit
    }

    pub fn current(&self) -> &TrialInProgress {
        &self.current
    }

    pub fn current_arena(&self) -> Arena<f64> {
        make_environment(self.current.env.0, self.current.env.1).expect("scheduled environments are valid")
    }

    /// AI inference of the current trial, once generated.
    pub fn revealed_ai(&self) -> Option<Inference> {
        self.current.ai
    }

    /// Scored trial records (practice excluded).
    pub fn records(&self) -> &[TrialRecord] {
        &self.records
    }

    pub fn practice_records(&self) -> &[TrialRecord] {
        &self.practice_records
    }

    pub fn is_done(&self) -> bool {
        self.phase == Phase::Done
    }

    /// 1-based trial number within its block (practice or scored).
    pub fn trial_number(&self) -> u32 {
        self.current.number + 1
    }

    pub fn is_practice(&self) -> bool {
        self.current.practice
    }

    fn next_env(&mut self) -> (usize, usize) {
        if self.schedule.is_empty() {
            let mut block: Vec<_> = all_environments().collect();
            block.shuffle(&mut self.env_rng);
            block.reverse();
            self.schedule = block;
        }
        self.schedule.pop().expect("schedule refilled")
    }

    fn begin_trial(&mut self, ts: &str) -> TrialInProgress {
        let practice = self.trials_started < self.config.n_practice;
        let number = if practice { self.trials_started } else { self.trials_started - self.config.n_practice };
        self.trials_started += 1;
        let env = self.next_env();
        let delays = assign_delays(&self.staircase, &mut self.delay_rng);
        TrialInProgress {
            practice,
            number,
            env,
            delays,
            level: self.staircase.level(),
            truth: delays.lower_robot,
            segments: [None, None],
            human_initial: None,
            ai: None,
            human_final: None,
            started_at: ts.to_string(),
            record: None,
        }
    }

    fn violation(&self, event: &EventBody) -> SessionError {
        SessionError::ProtocolViolation { phase: self.phase, event: event.kind() }
    }

    /// Applies one input event. On error the session is left unchanged.
    pub fn advance(&mut self, ts: &str, event: &EventBody) -> Result<Phase, SessionError> {
        use EventBody as E;
        let next = match (self.phase, event) {
            (Phase::TeleopA, E::SegmentComplete { robot: RobotId::A, reached_goal, elapsed_ticks }) => {
                self.current.segments[0] =
                    Some(SegmentOutcome { reached_goal: *reached_goal, elapsed_ticks: *elapsed_ticks });
                Phase::TeleopB
            }
            (Phase::TeleopB, E::SegmentComplete { robot: RobotId::B, reached_goal, elapsed_ticks }) => {
                self.current.segments[1] =
                    Some(SegmentOutcome { reached_goal: *reached_goal, elapsed_ticks: *elapsed_ticks });
                Phase::InitialInference
            }
            (Phase::InitialInference, E::InitialInference(inf)) => {
                self.current.human_initial = Some(*inf);
                self.current.ai = Some(ai_infer(&self.dss, self.current.truth, self.current.level, &mut self.ai_rng));
                Phase::AiReveal
            }
            (Phase::AiReveal, E::AiRevealed(shown)) => {
                if Some(*shown) != self.current.ai {
                    return Err(SessionError::Divergence { what: "AI inference" });
                }
                Phase::ChangeDecision
            }
            (Phase::ChangeDecision, E::KeepInitial {}) => {
                self.current.human_final = self.current.human_initial;
                self.resolve(ts);
                Phase::Resolution
            }
            (Phase::ChangeDecision, E::RequestChange {}) => Phase::FinalInference,
            (Phase::FinalInference, E::FinalInference(inf)) => {
                self.current.human_final = Some(*inf);
                self.resolve(ts);
                Phase::Resolution
            }
            (Phase::Resolution, E::NextTrial {}) => {
                let total = self.config.n_practice + self.config.n_trials;
                if self.trials_started >= total {
                    Phase::Done
                } else {
                    self.current = self.begin_trial(ts);
                    Phase::TeleopA
                }
            }
            _ => return Err(self.violation(event)),
        };
        self.phase = next;
        Ok(next)
    }

    fn resolve(&mut self, ts: &str) {
        let cur = &self.current;
        let truth = cur.truth;
        let initial = cur.human_initial.expect("initial inference recorded");
        let final_ = cur.human_final.expect("final inference recorded");
        let ai = cur.ai.expect("AI inference generated");

        let mcs_pick = mcs(initial, ai, self.config.tie_policy, &mut self.fusion_rng).0;
        let dlc_pick = dummy_low_confidence(initial, ai).0;
        let dr_pick = dummy_random(initial, ai, &mut self.fusion_rng).0;
        let ts_pick = ts_choose(&self.bandit, initial, ai, &mut self.fusion_rng).0;

        let result = |inf: Inference| StrategyResult { choice: inf.choice, correct: inf.choice == truth };
        let outcomes = BTreeMap::from([
            (StrategyId::Mcs, result(mcs_pick)),
            (StrategyId::HumanInitiative, result(final_)),
            (StrategyId::Dlc, result(dlc_pick)),
            (StrategyId::Dr, result(dr_pick)),
            (StrategyId::Ts, result(ts_pick)),
        ]);
        let record = TrialRecord {
            session_id: self.id.clone(),
            trial_index: cur.number,
            env: cur.env,
            delays: cur.delays,
            level: cur.level,
            truth,
            human_initial: initial,
            ai,
            changed: final_ != initial,
            human_final: final_,
            outcomes,
            segments: [cur.segments[0].unwrap_or_default(), cur.segments[1].unwrap_or_default()],
            calibration: self.dss.calibration(),
            started_at: cur.started_at.clone(),
            resolved_at: ts.to_string(),
        };

        if cur.practice {
            self.practice_records.push(record.clone());
        } else {
            let reference = match self.config.staircase_driver {
                StaircaseDriver::InitialInference => record.initial_correct(),
                StaircaseDriver::FinalInference => record.final_correct(),
            };
            self.staircase = self.staircase.update(reference);
            self.bandit = ts_update(self.bandit, record.initial_correct(), record.ai_correct());
            self.records.push(record.clone());
        }
        self.current.record = Some(record);
    }
}

fn placeholder_trial() -> TrialInProgress {
    TrialInProgress {
        practice: true,
        number: 0,
        env: (0, 0),
        delays: DelayAssignment { delay_a_ms: 0, delay_b_ms: 0, lower_robot: RobotId::A },
        level: DifficultyLevel::from_index(0),
        truth: RobotId::A,
        segments: [None, None],
        human_initial: None,
        ai: None,
        human_final: None,
        started_at: String::new(),
        record: None,
    }
}

/// Why a completed session was dropped from analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ExclusionReason {
    LowAccuracy(f64),
    RepetitiveConfidence { confidence: u8, count: u32 },
}

/// Initial-inference accuracy below the threshold, or one confidence value
/// used on more than the allowed number of trials.
pub fn exclusion_reason(records: &[TrialRecord], config: &SessionConfig) -> Option<ExclusionReason> {
    if records.is_empty() {
        return Some(ExclusionReason::LowAccuracy(0.0));
    }
    let acc = records.iter().filter(|r| r.initial_correct()).count() as f64 / records.len() as f64;
    if acc < config.exclusion_min_accuracy {
        return Some(ExclusionReason::LowAccuracy(acc));
    }
    let mut counts = [0u32; 4];
    for r in records {
        counts[r.human_initial.confidence.index()] += 1;
    }
    counts
        .iter()
        .enumerate()
        .find(|(_, &n)| n > config.exclusion_same_conf_max)
        .map(|(i, &n)| ExclusionReason::RepetitiveConfidence { confidence: i as u8 + 1, count: n })
}

pub fn apply_exclusions(sessions: Vec<Vec<TrialRecord>>, config: &SessionConfig) -> Vec<Vec<TrialRecord>> {
    sessions.into_iter().filter(|s| exclusion_reason(s, config).is_none()).collect()
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("sequence gap: expected {expected}, got {got}")]
    SeqGap { expected: u64, got: u64 },
    #[error("event for session `{got}` appended to log of `{expected}`")]
    SessionMismatch { expected: String, got: String },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Append-only, gap-free event log of one session.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    events: Vec<Event>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn next_seq(&self) -> u64 {
        self.events.last().map_or(0, |e| e.seq + 1)
    }

    pub fn append(&mut self, event: Event) -> Result<(), LogError> {
        let expected = self.next_seq();
        if event.seq != expected {
            return Err(LogError::SeqGap { expected, got: event.seq });
        }
        if let Some(first) = self.events.first() {
            if first.session != event.session {
                return Err(LogError::SessionMismatch { expected: first.session.clone(), got: event.session });
            }
        }
        self.events.push(event);
        Ok(())
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), LogError> {
        for e in &self.events {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, ReplayError> {
        let mut log = Self::new();
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| ReplayError::CorruptLog(format!("line {}: {e}", i + 1)))?;
            if line.trim().is_empty() {
                continue;
            }
            let ev: Event =
                serde_json::from_str(&line).map_err(|e| ReplayError::CorruptLog(format!("line {}: {e}", i + 1)))?;
            log.append(ev).map_err(|e| ReplayError::CorruptLog(format!("line {}: {e}", i + 1)))?;
        }
        Ok(log)
    }
}

/// Streams events to a JSON-lines file, flushing after each line.
pub struct JsonlSink<W: Write> {
    out: W,
}

impl<W: Write> JsonlSink<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn write(&mut self, event: &Event) -> Result<(), LogError> {
        serde_json::to_writer(&mut self.out, event)?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }
}

pub trait Clock {
    fn now(&mut self) -> DateTime<Utc>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&mut self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Deterministic clock for headless runs: advances a fixed step per reading
/// plus whatever the driver adds explicitly.
#[derive(Debug, Clone, Copy)]
pub struct VirtualClock {
    at: DateTime<Utc>,
    step: TimeDelta,
}

impl VirtualClock {
    pub fn new(start: DateTime<Utc>, step_ms: i64) -> Self {
        Self { at: start, step: TimeDelta::milliseconds(step_ms) }
    }

    pub fn advance_ms(&mut self, ms: i64) {
        self.at += TimeDelta::milliseconds(ms);
    }
}

impl Default for VirtualClock {
    fn default() -> Self {
        Self::new(DateTime::from_timestamp(1_704_067_200, 0).expect("valid epoch"), 1000)
    }
}

impl Clock for VirtualClock {
    fn now(&mut self) -> DateTime<Utc> {
        let t = self.at;
        self.at += self.step;
        t
    }
}

pub fn format_ts(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// A session together with its log. Every state change goes through
/// [`Recorder::apply`], which stamps, advances, and appends in that order.
pub struct Recorder<C: Clock> {
    session: Session,
    log: EventLog,
    clock: C,
}

impl<C: Clock> Recorder<C> {
    pub fn create(id: impl Into<String>, config: SessionConfig, dss: AiDssModel, mut clock: C) -> Result<Self, SessionError> {
        let id = id.into();
        let ts = format_ts(clock.now());
        let session = Session::new(id.clone(), config.clone(), dss.clone(), &ts)?;
        let mut log = EventLog::new();
        log.append(Event { seq: 0, ts, session: id, body: EventBody::SessionCreated { config, dss } })
            .expect("first event");
        Ok(Self { session, log, clock })
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn clock_mut(&mut self) -> &mut C {
        &mut self.clock
    }

    pub fn last_event(&self) -> &Event {
        self.log.events().last().expect("log starts with session_created")
    }

    pub fn apply(&mut self, body: EventBody) -> Result<Phase, SessionError> {
        let ts = format_ts(self.clock.now());
        let phase = self.session.advance(&ts, &body)?;
        let seq = self.log.next_seq();
        self.log
            .append(Event { seq, ts, session: self.session.id.clone(), body })
            .expect("recorder owns the sequence");
        Ok(phase)
    }

    /// Seals a completed session with the hash of its records.
    pub fn finish(&mut self) -> Result<(), SessionError> {
        if !self.session.is_done() {
            return Err(SessionError::ProtocolViolation { phase: self.session.phase, event: "session_done" });
        }
        let ts = format_ts(self.clock.now());
        let body = EventBody::SessionDone { records_sha256: records_sha256(&self.session.records) };
        let seq = self.log.next_seq();
        self.log.append(Event { seq, ts, session: self.session.id.clone(), body }).expect("sequence");
        Ok(())
    }

    pub fn into_parts(self) -> (Session, EventLog) {
        (self.session, self.log)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReplayError {
    #[error("corrupt log: {0}")]
    CorruptLog(String),
    #[error("records hash mismatch: logged {expected}, replayed {actual}")]
    HashMismatch { expected: String, actual: String },
}

/// Rebuilds the session from its log and returns the scored records.
pub fn replay(log: &EventLog) -> Result<Vec<TrialRecord>, ReplayError> {
    Ok(replay_session(log)?.records)
}

pub fn replay_session(log: &EventLog) -> Result<Session, ReplayError> {
    let corrupt = |m: String| ReplayError::CorruptLog(m);
    let mut events = log.events().iter();
    let first = events.next().ok_or_else(|| corrupt("empty log".into()))?;
    let EventBody::SessionCreated { config, dss } = &first.body else {
        return Err(corrupt("log does not start with session_created".into()));
    };
    let mut session = Session::new(first.session.clone(), config.clone(), dss.clone(), &first.ts)
        .map_err(|e| corrupt(format!("seq 0: {e}")))?;
    let mut sealed = false;
    for ev in events {
        if sealed {
            return Err(corrupt(format!("seq {}: event after session_done", ev.seq)));
        }
        match &ev.body {
            EventBody::SessionCreated { .. } => return Err(corrupt(format!("seq {}: duplicate session_created", ev.seq))),
            EventBody::SessionDone { records_sha256: expected } => {
                if !session.is_done() {
                    return Err(corrupt(format!("seq {}: session_done before the last trial", ev.seq)));
                }
                let actual = records_sha256(&session.records);
                if &actual != expected {
                    return Err(ReplayError::HashMismatch { expected: expected.clone(), actual });
                }
                sealed = true;
            }
            body => {
                session.advance(&ev.ts, body).map_err(|e| corrupt(format!("seq {}: {e}", ev.seq)))?;
            }
        }
    }
    if !sealed {
        return Err(corrupt("log is truncated (no session_done)".into()));
    }
    Ok(session)
}

/// Column order of the trial-record CSV.
pub const RECORD_COLUMNS: [&str; 34] = [
    "session_id",
    "trial_index",
    "start_index",
    "gap_index",
    "delay_a_ms",
    "delay_b_ms",
    "differential_ms",
    "level",
    "truth",
    "human_initial_choice",
    "human_initial_confidence",
    "ai_choice",
    "ai_confidence",
    "changed",
    "human_final_choice",
    "human_final_confidence",
    "mcs_choice",
    "mcs_correct",
    "human_initiative_choice",
    "human_initiative_correct",
    "dlc_choice",
    "dlc_correct",
    "dr_choice",
    "dr_correct",
    "ts_choice",
    "ts_correct",
    "segment_a_goal",
    "segment_a_ticks",
    "segment_b_goal",
    "segment_b_ticks",
    "dss_calibration",
    "lower_robot",
    "started_at",
    "resolved_at",
];

#[derive(Debug, Error)]
pub enum RecordCsvError {
    #[error("record csv row {row}: {msg}")]
    Row { row: usize, msg: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn b01(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn record_fields(r: &TrialRecord) -> Vec<String> {
    let mut f = vec![
        r.session_id.clone(),
        r.trial_index.to_string(),
        r.env.0.to_string(),
        r.env.1.to_string(),
        r.delays.delay_a_ms.to_string(),
        r.delays.delay_b_ms.to_string(),
        r.differential_ms().to_string(),
        r.level.level().to_string(),
        r.truth.to_string(),
        r.human_initial.choice.to_string(),
        r.human_initial.confidence.to_string(),
        r.ai.choice.to_string(),
        r.ai.confidence.to_string(),
        b01(r.changed).into(),
        r.human_final.choice.to_string(),
        r.human_final.confidence.to_string(),
    ];
    for id in StrategyId::PER_TRIAL {
        match r.outcomes.get(&id) {
            Some(o) => {
                f.push(o.choice.to_string());
                f.push(b01(o.correct).into());
            }
            None => {
                f.push(String::new());
                f.push(String::new());
            }
        }
    }
    for s in &r.segments {
        f.push(b01(s.reached_goal).into());
        f.push(s.elapsed_ticks.to_string());
    }
    f.push(r.calibration.to_string());
    f.push(r.delays.lower_robot.to_string());
    f.push(r.started_at.clone());
    f.push(r.resolved_at.clone());
    f
}

pub fn write_records_csv<W: Write>(records: &[TrialRecord], w: W) -> Result<(), csv::Error> {
    let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    wtr.write_record(RECORD_COLUMNS)?;
    for r in records {
        wtr.write_record(record_fields(r))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn records_to_csv(records: &[TrialRecord]) -> String {
    let mut buf = Vec::new();
    write_records_csv(records, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv is utf-8")
}

pub fn records_sha256(records: &[TrialRecord]) -> String {
    hex::encode(Sha256::digest(records_to_csv(records).as_bytes()))
}

pub fn read_records_csv<R: io::Read>(r: R) -> Result<Vec<TrialRecord>, RecordCsvError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header = rdr.headers()?.clone();
    if header.iter().ne(RECORD_COLUMNS.iter().copied()) {
        return Err(RecordCsvError::Row { row: 1, msg: "unexpected header".into() });
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let err = |msg: String| RecordCsvError::Row { row: line, msg };
        let get = |name: &str| -> &str {
            let idx = RECORD_COLUMNS.iter().position(|c| *c == name).expect("known column");
            row.get(idx).unwrap_or("")
        };
        let num = |name: &str| -> Result<u64, RecordCsvError> {
            get(name).parse::<u64>().map_err(|e| err(format!("{name}: {e}")))
        };
        let flag = |name: &str| -> Result<bool, RecordCsvError> {
            match get(name) {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(err(format!("{name}: expected 0 or 1, got `{other}`"))),
            }
        };
        let robot = |name: &str| -> Result<RobotId, RecordCsvError> {
            get(name).parse::<RobotId>().map_err(|e| err(format!("{name}: {e}")))
        };
        let inference = |c: &str, k: &str| -> Result<Inference, RecordCsvError> {
            let conf = crate::types::LikertConfidence::new(num(k)? as i64).map_err(|e| err(format!("{k}: {e}")))?;
            Ok(Inference::new(robot(c)?, conf))
        };
        let mut outcomes = BTreeMap::new();
        for (id, prefix) in StrategyId::PER_TRIAL.iter().zip(["mcs", "human_initiative", "dlc", "dr", "ts"]) {
            let choice_col = format!("{prefix}_choice");
            if get(&choice_col).is_empty() {
                continue;
            }
            outcomes.insert(
                *id,
                StrategyResult { choice: robot(&choice_col)?, correct: flag(&format!("{prefix}_correct"))? },
            );
        }
        let level = DifficultyLevel::new(num("level")? as u8).map_err(|e| err(e.to_string()))?;
        out.push(TrialRecord {
            session_id: get("session_id").to_string(),
            trial_index: num("trial_index")? as u32,
            env: (num("start_index")? as usize, num("gap_index")? as usize),
            delays: DelayAssignment {
                delay_a_ms: num("delay_a_ms")? as u32,
                delay_b_ms: num("delay_b_ms")? as u32,
                lower_robot: robot("lower_robot")?,
            },
            level,
            truth: robot("truth")?,
            human_initial: inference("human_initial_choice", "human_initial_confidence")?,
            ai: inference("ai_choice", "ai_confidence")?,
            changed: flag("changed")?,
            human_final: inference("human_final_choice", "human_final_confidence")?,
            outcomes,
            segments: [
                SegmentOutcome { reached_goal: flag("segment_a_goal")?, elapsed_ticks: num("segment_a_ticks")? },
                SegmentOutcome { reached_goal: flag("segment_b_goal")?, elapsed_ticks: num("segment_b_ticks")? },
            ],
            calibration: get("dss_calibration").parse().map_err(|e: crate::agents::AgentError| err(e.to_string()))?,
            started_at: get("started_at").to_string(),
            resolved_at: get("resolved_at").to_string(),
        });
    }
    Ok(out)
}
