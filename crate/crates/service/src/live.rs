//! One live session: the recorded state machine plus the segment simulator
//! the operator is currently driving. Everything here is synchronous; the
//! network layer only serializes access and moves bytes.

use chrono::{DateTime, Utc};
use mcs_core::agents::AiDssModel;
use mcs_core::session::{format_ts, Clock, EventBody, EventLog, Phase, Recorder, SessionConfig, SessionError, SystemClock};
use mcs_core::sim::{SegmentRunner, SimError, VelocityCommand};
use mcs_core::types::{Inference, LikertConfidence};
use rand::Rng;
use thiserror::Error;

use crate::wire::{
    CreateSessionRequest, EndReason, InferenceRequest, InferenceResponse, ServerMessage, SessionHandle, Stage, WirePose,
};

/// Sim ticks between `state` messages (20 Hz at a 5 ms tick).
pub const STATE_EVERY_TICKS: u64 = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ServiceError {
    #[error("invalid request: {0}")]
    BadRequest(String),
    #[error("unknown session `{0}`")]
    NotFound(String),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("confidence {0} outside 1..=4")]
    InvalidConfidence(i64),
    #[error("a stream is already open for this session")]
    StreamBusy,
}

pub struct LiveSession<C: Clock = SystemClock> {
    recorder: Recorder<C>,
    created_at: DateTime<Utc>,
    runner: Option<SegmentRunner<f64>>,
    last_cmd_seq: Option<u64>,
}

impl LiveSession<SystemClock> {
    pub fn create(id: &str, req: CreateSessionRequest) -> Result<Self, ServiceError> {
        Self::create_with_clock(id, req, SystemClock)
    }
}

impl<C: Clock> LiveSession<C> {
    /// Seeds are drawn when absent and reported back in the handle's config.
    pub fn create_with_clock(id: &str, req: CreateSessionRequest, mut clock: C) -> Result<Self, ServiceError> {
        let mut config = req.config.unwrap_or_default();
        config.seed = req.seed.unwrap_or_else(|| rand::rng().random());
        let created_at = clock.now();
        let recorder = Recorder::create(id, config, AiDssModel::builtin(req.dss_calibration), clock)?;
        Ok(Self { recorder, created_at, runner: None, last_cmd_seq: None })
    }

    pub fn phase(&self) -> Phase {
        self.recorder.session().phase()
    }

    pub fn session(&self) -> &mcs_core::session::Session {
        self.recorder.session()
    }

    pub fn log(&self) -> &EventLog {
        self.recorder.log()
    }

    pub fn segment_active(&self) -> bool {
        self.runner.is_some()
    }

    pub fn handle(&self) -> SessionHandle {
        let s = self.recorder.session();
        SessionHandle {
            session_id: s.id().to_string(),
            config: s.config().clone(),
            dss_calibration: s.dss().calibration(),
            phase: s.phase(),
            trial: s.trial_number(),
            practice: s.is_practice(),
            records: s.records().len(),
            created_at: format_ts(self.created_at),
        }
    }

    pub fn phase_message(&self) -> ServerMessage {
        ServerMessage::Phase { phase: self.phase(), trial: self.recorder.session().trial_number() }
    }

    /// Dispatches one realtime client message.
    pub fn handle_message(&mut self, msg: crate::wire::ClientMessage) -> Vec<ServerMessage> {
        use crate::wire::ClientMessage as M;
        match msg {
            M::Ready => self.start_segment(),
            M::Cmd { seq, linear, angular } => self.push_command(seq, linear, angular),
        }
    }

    fn start_segment(&mut self) -> Vec<ServerMessage> {
        let Some(robot) = self.phase().teleop_robot() else {
            return vec![ServerMessage::error("not_in_teleop")];
        };
        if self.runner.is_some() {
            return vec![ServerMessage::error("segment_in_progress")];
        }
        let s = self.recorder.session();
        let delay = s.current().delays.delay_for(robot);
        let runner = SegmentRunner::new(s.current_arena(), delay, s.config().segment_time_limit_ms)
            .expect("validated time limit");
        let pose = runner.pose();
        let msg = ServerMessage::State {
            tick: 0,
            robot: WirePose { x: pose.x, y: pose.y, theta: pose.theta },
            remaining_ms: runner.remaining_ms(),
        };
        self.runner = Some(runner);
        self.last_cmd_seq = None;
        vec![msg]
    }

    fn push_command(&mut self, seq: u64, linear: f64, angular: f64) -> Vec<ServerMessage> {
        if !self.phase().is_teleop() {
            return vec![ServerMessage::error("not_in_teleop")];
        }
        let Some(runner) = self.runner.as_mut() else {
            return vec![ServerMessage::error("segment_not_started")];
        };
        if self.last_cmd_seq.is_some_and(|last| seq <= last) {
            return vec![ServerMessage::error("stale_seq")];
        }
        let cmd = match VelocityCommand::new(linear, angular, runner.now()) {
            Ok(c) => c,
            Err(SimError::CommandOutOfBounds { .. }) => return vec![ServerMessage::error("command_out_of_bounds")],
            Err(_) => return vec![ServerMessage::error("invalid_command")],
        };
        match runner.push(cmd) {
            Ok(()) => {
                self.last_cmd_seq = Some(seq);
                Vec::new()
            }
            Err(_) => vec![ServerMessage::error("invalid_command")],
        }
    }

    /// Advances the active segment by one sim tick. Emits `state` every
    /// [`STATE_EVERY_TICKS`] ticks, and `segment_end` plus the new phase when
    /// the segment finishes.
    pub fn tick(&mut self) -> Vec<ServerMessage> {
        let Some(runner) = self.runner.as_mut() else {
            return Vec::new();
        };
        let mut out = Vec::new();
        if let Some(sample) = runner.tick() {
            if (sample.tick + 1) % STATE_EVERY_TICKS == 0 {
                out.push(ServerMessage::State {
                    tick: sample.tick + 1,
                    robot: WirePose { x: sample.pose.x, y: sample.pose.y, theta: sample.pose.theta },
                    remaining_ms: runner.remaining_ms(),
                });
            }
        }
        if runner.is_finished() {
            let robot = self.phase().teleop_robot().expect("segments run only in teleop phases");
            let runner = self.runner.take().expect("checked above");
            let reached_goal = runner.reached_goal();
            let elapsed_ticks = runner.now();
            self.recorder
                .apply(EventBody::SegmentComplete { robot, reached_goal, elapsed_ticks })
                .expect("segment completion matches the teleop phase");
            out.push(ServerMessage::SegmentEnd { reason: if reached_goal { EndReason::Goal } else { EndReason::Timeout } });
            out.push(self.phase_message());
        }
        out
    }

    /// Runs ticks until the active segment ends (headless use and tests).
    pub fn run_segment_to_end(&mut self) -> Vec<ServerMessage> {
        let mut out = Vec::new();
        while self.runner.is_some() {
            out.extend(self.tick());
        }
        out
    }

    fn inference(req: &InferenceRequest) -> Result<Inference, ServiceError> {
        let choice = req.choice.ok_or_else(|| ServiceError::BadRequest("missing choice".into()))?;
        let raw = req.confidence.ok_or_else(|| ServiceError::BadRequest("missing confidence".into()))?;
        let confidence = LikertConfidence::new(raw).map_err(|_| ServiceError::InvalidConfidence(raw))?;
        Ok(Inference::new(choice, confidence))
    }

    fn expect_phase(&self, allowed: &[Phase], event: &'static str) -> Result<(), ServiceError> {
        if allowed.contains(&self.phase()) {
            Ok(())
        } else {
            Err(SessionError::ProtocolViolation { phase: self.phase(), event }.into())
        }
    }

    /// Applies an inference submission. A submission that resolves the trial
    /// also moves on to the next trial, sealing the log after the last one.
    pub fn submit_inference(&mut self, req: &InferenceRequest) -> Result<InferenceResponse, ServiceError> {
        let mut ai = None;
        let mut resolved_trial = None;
        match req.stage {
            Stage::Initial => {
                let inf = Self::inference(req)?;
                self.expect_phase(&[Phase::InitialInference], "initial_inference")?;
                self.recorder.apply(EventBody::InitialInference(inf))?;
                let shown = self.recorder.session().revealed_ai().expect("generated on initial inference");
                self.recorder.apply(EventBody::AiRevealed(shown))?;
                ai = Some(shown);
            }
            Stage::NoChange => {
                self.expect_phase(&[Phase::ChangeDecision], "keep_initial")?;
                resolved_trial = Some(self.recorder.session().trial_number());
                self.recorder.apply(EventBody::KeepInitial {})?;
                self.next_trial()?;
            }
            Stage::Final => {
                let inf = Self::inference(req)?;
                self.expect_phase(&[Phase::ChangeDecision, Phase::FinalInference], "final_inference")?;
                resolved_trial = Some(self.recorder.session().trial_number());
                if self.phase() == Phase::ChangeDecision {
                    self.recorder.apply(EventBody::RequestChange {})?;
                }
                self.recorder.apply(EventBody::FinalInference(inf))?;
                self.next_trial()?;
            }
        }
        Ok(InferenceResponse {
            phase: self.phase(),
            trial: self.recorder.session().trial_number(),
            ai,
            resolved_trial,
        })
    }

    fn next_trial(&mut self) -> Result<(), ServiceError> {
        self.recorder.apply(EventBody::NextTrial {})?;
        if self.recorder.session().is_done() {
            self.recorder.finish()?;
        }
        Ok(())
    }

    pub fn records_csv(&self) -> String {
        mcs_core::session::records_to_csv(self.recorder.session().records())
    }
}

impl<C: Clock> LiveSession<C> {
    pub fn config(&self) -> &SessionConfig {
        self.recorder.session().config()
    }
}
