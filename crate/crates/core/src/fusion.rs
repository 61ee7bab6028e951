//! Joint-inference arbitration between a human and the AI agent.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::types::{Inference, RobotId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("unknown strategy `{0}`")]
    UnknownStrategy(String),
}

/// Whose inference a strategy adopted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Human,
    Ai,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StrategyId {
    #[serde(rename = "MCS")]
    Mcs,
    #[serde(rename = "HUMAN_INITIATIVE")]
    HumanInitiative,
    #[serde(rename = "DLC")]
    Dlc,
    #[serde(rename = "DR")]
    Dr,
    #[serde(rename = "TS")]
    Ts,
    #[serde(rename = "HP")]
    Hp,
    #[serde(rename = "LP")]
    Lp,
}

impl StrategyId {
    pub const ALL: [StrategyId; 7] = [
        StrategyId::Mcs,
        StrategyId::HumanInitiative,
        StrategyId::Dlc,
        StrategyId::Dr,
        StrategyId::Ts,
        StrategyId::Hp,
        StrategyId::Lp,
    ];
    /// Strategies decided trial by trial (HP/LP need the whole dyad).
    pub const PER_TRIAL: [StrategyId; 5] =
        [StrategyId::Mcs, StrategyId::HumanInitiative, StrategyId::Dlc, StrategyId::Dr, StrategyId::Ts];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyId::Mcs => "MCS",
            StrategyId::HumanInitiative => "HUMAN_INITIATIVE",
            StrategyId::Dlc => "DLC",
            StrategyId::Dr => "DR",
            StrategyId::Ts => "TS",
            StrategyId::Hp => "HP",
            StrategyId::Lp => "LP",
        }
    }
}

impl fmt::Display for StrategyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyId {
    type Err = FusionError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|id| id.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| FusionError::UnknownStrategy(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiePolicy {
    #[default]
    PreferHuman,
    PreferAi,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArbitrationInput {
    pub human_initial: Inference,
    pub human_final: Inference,
    pub ai: Inference,
    pub truth: RobotId,
}

impl ArbitrationInput {
    pub fn unchanged(human: Inference, ai: Inference, truth: RobotId) -> Self {
        Self { human_initial: human, human_final: human, ai, truth }
    }

    pub fn disagreement(&self) -> bool {
        self.human_initial.choice != self.ai.choice
    }
}

fn check_probability<T: Scalar>(p: T) -> Result<(), FusionError> {
    if p >= T::zero() && p <= T::one() {
        Ok(())
    } else {
        Err(FusionError::InvalidProbability(p.to_f64().unwrap_or(f64::NAN)))
    }
}

/// Optimal label for a calibrated prediction; 0.5 maps to 1.
pub fn threshold_decision<T: Scalar>(p: T) -> Result<u8, FusionError> {
    check_probability(p)?;
    Ok(if p < T::lit(0.5) { 0 } else { 1 })
}

/// Adopt whichever agent is more confident.
pub fn mcs<R: Rng + ?Sized>(human: Inference, ai: Inference, tie: TiePolicy, rng: &mut R) -> (Inference, Source) {
    use std::cmp::Ordering::*;
    let source = match human.confidence.cmp(&ai.confidence) {
        Greater => Source::Human,
        Less => Source::Ai,
        Equal => match tie {
            TiePolicy::PreferHuman => Source::Human,
            TiePolicy::PreferAi => Source::Ai,
            TiePolicy::Random => {
                if rng.random_bool(0.5) {
                    Source::Human
                } else {
                    Source::Ai
                }
            }
        },
    };
    (pick(human, ai, source), source)
}

/// Probabilistic form: the agent whose prediction is furthest from 0.5
/// decides; equal distances defer to the human.
pub fn mcs_probabilistic<T: Scalar>(p_human: T, p_ai: T) -> Result<u8, FusionError> {
    check_probability(p_human)?;
    check_probability(p_ai)?;
    let half = T::lit(0.5);
    if (p_ai - half).abs() > (p_human - half).abs() {
        threshold_decision(p_ai)
    } else {
        threshold_decision(p_human)
    }
}

/// Adopt whichever agent is less confident; ties go to the human.
pub fn dummy_low_confidence(human: Inference, ai: Inference) -> (Inference, Source) {
    let source = if ai.confidence < human.confidence { Source::Ai } else { Source::Human };
    (pick(human, ai, source), source)
}

/// Fair coin between the two; one draw is consumed even when they agree.
pub fn dummy_random<R: Rng + ?Sized>(human: Inference, ai: Inference, rng: &mut R) -> (Inference, Source) {
    let source = if rng.random_bool(0.5) { Source::Human } else { Source::Ai };
    (pick(human, ai, source), source)
}

fn pick(human: Inference, ai: Inference, source: Source) -> Inference {
    match source {
        Source::Human => human,
        Source::Ai => ai,
    }
}

/// Beta posteriors over the success rate of each arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BanditState {
    pub alpha_h: f64,
    pub beta_h: f64,
    pub alpha_a: f64,
    pub beta_a: f64,
}

impl Default for BanditState {
    fn default() -> Self {
        Self { alpha_h: 1.0, beta_h: 1.0, alpha_a: 1.0, beta_a: 1.0 }
    }
}

impl BanditState {
    pub fn mean_human(&self) -> f64 {
        self.alpha_h / (self.alpha_h + self.beta_h)
    }

    pub fn mean_ai(&self) -> f64 {
        self.alpha_a / (self.alpha_a + self.beta_a)
    }
}

/// Thompson draw from each posterior; the larger draw wins, ties to human.
pub fn ts_select<R: Rng + ?Sized>(state: &BanditState, rng: &mut R) -> Source {
    let h = Beta::new(state.alpha_h, state.beta_h).expect("positive beta parameters").sample(rng);
    let a = Beta::new(state.alpha_a, state.beta_a).expect("positive beta parameters").sample(rng);
    if a > h {
        Source::Ai
    } else {
        Source::Human
    }
}

/// Full-information update: both arms' correctness is observed every trial.
#[must_use]
pub fn ts_update(state: BanditState, human_correct: bool, ai_correct: bool) -> BanditState {
    let bump = |alpha: f64, beta: f64, ok: bool| if ok { (alpha + 1.0, beta) } else { (alpha, beta + 1.0) };
    let (alpha_h, beta_h) = bump(state.alpha_h, state.beta_h, human_correct);
    let (alpha_a, beta_a) = bump(state.alpha_a, state.beta_a, ai_correct);
    BanditState { alpha_h, beta_h, alpha_a, beta_a }
}

/// Pick an inference for a bandit arm.
pub fn ts_choose<R: Rng + ?Sized>(state: &BanditState, human: Inference, ai: Inference, rng: &mut R) -> (Inference, Source) {
    let source = ts_select(state, rng);
    (pick(human, ai, source), source)
}
