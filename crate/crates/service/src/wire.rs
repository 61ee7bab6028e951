//! Realtime stream messages (schema version 1) and HTTP bodies.

use mcs_core::agents::Calibration;
use mcs_core::session::{Phase, SessionConfig};
use mcs_core::types::{Inference, RobotId};
use serde::{Deserialize, Serialize};

pub const WIRE_VERSION: u32 = 1;

fn default_version() -> u32 {
    WIRE_VERSION
}

/// Client to server. A missing `v` is read as version 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientEnvelope {
    #[serde(default = "default_version")]
    pub v: u32,
    #[serde(flatten)]
    pub msg: ClientMessage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    Cmd { seq: u64, linear: f64, angular: f64 },
    Ready,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WirePose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    Goal,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    State { tick: u64, robot: WirePose, remaining_ms: u64 },
    SegmentEnd { reason: EndReason },
    Phase { phase: Phase, trial: u32 },
    Error { code: String },
}

impl ServerMessage {
    pub fn error(code: &str) -> Self {
        ServerMessage::Error { code: code.to_string() }
    }

    /// JSON text with the version field first.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&ServerEnvelope { v: WIRE_VERSION, msg: self.clone() }).expect("wire messages serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerEnvelope {
    pub v: u32,
    #[serde(flatten)]
    pub msg: ServerMessage,
}

/// Parses one client frame; the error is the wire error code.
pub fn parse_client(text: &str) -> Result<ClientMessage, &'static str> {
    let env: ClientEnvelope = serde_json::from_str(text).map_err(|_| "invalid_message")?;
    if env.v != WIRE_VERSION {
        return Err("unsupported_version");
    }
    Ok(env.msg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSessionRequest {
    #[serde(default)]
    pub seed: Option<u64>,
    pub dss_calibration: Calibration,
    #[serde(default)]
    pub config: Option<SessionConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionHandle {
    pub session_id: String,
    pub config: SessionConfig,
    pub dss_calibration: Calibration,
    pub phase: Phase,
    pub trial: u32,
    pub practice: bool,
    pub records: usize,
    pub created_at: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Initial,
    Final,
    NoChange,
}

/// Confidence arrives as a plain integer so out-of-range values can be
/// reported as such rather than as a parse failure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceRequest {
    pub stage: Stage,
    #[serde(default)]
    pub choice: Option<RobotId>,
    #[serde(default)]
    pub confidence: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceResponse {
    pub phase: Phase,
    pub trial: u32,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ai: Option<Inference>,
    /// Set when the submission resolved the trial.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub resolved_trial: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub detail: String,
}
