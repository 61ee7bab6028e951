//! Delayed-teleoperation inference task with AI decision support.
//!
//! Two simulated robots are driven through the same doorway arena under
//! different control delays; the operator has to say which one lagged less
//! and how sure they are. An AI agent gives its own answer with a confidence
//! drawn from human-like tables, and joint-inference strategies combine the
//! two.
//!
//! The kinematics and metric code is generic over [`Scalar`] (`f32` or
//! `f64`); the aliases below fix the common instantiations.

pub mod agents;
pub mod experiment;
pub mod fusion;
pub mod metrics;
pub mod report;
pub mod scalar;
pub mod session;
pub mod sim;
pub mod staircase;
pub mod types;

pub use agents::{ai_infer, synthetic_infer, AiDssModel, Calibration, ConfidenceTable, SyntheticOperator, TrialDatum};
pub use fusion::{mcs, BanditState, Source, StrategyId, TiePolicy};
pub use metrics::{auroc2, jsd, ols_fit, t_test, RatingSample, TTestMode};
pub use scalar::Scalar;
pub use session::{
    replay, EventBody, EventLog, Phase, Recorder, Session, SessionConfig, SessionError, TrialRecord,
};
pub use sim::{make_environment, run_trial_segment, DelayLine, SegmentRunner};
pub use staircase::{assign_delays, DelayAssignment, DifficultyLevel, StaircaseState};
pub use types::{Inference, LikertConfidence, RobotId};

pub type Pose = sim::Pose2D<f64>;
pub type Pose32 = sim::Pose2D<f32>;
pub type Command = sim::VelocityCommand<f64>;
pub type Command32 = sim::VelocityCommand<f32>;
pub type Arena = sim::Arena<f64>;
pub type Arena32 = sim::Arena<f32>;
pub type Trajectory = sim::Trajectory<f64>;
pub type Trajectory32 = sim::Trajectory<f32>;
pub type RegressionFit = metrics::RegressionFit<f64>;
pub type TTestResult = metrics::TTest<f64>;
