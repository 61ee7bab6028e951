//! 2-down/1-up staircase over the control-delay differential between the two
//! robots.
//!
//! The differential starts at 35 ms and moves in 20 ms steps, so it lives on
//! {15, 35, 55, 75, 95}. For analysis each value is binned to the nearest of
//! the five nominal levels 20..100 ms.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::RobotId;

pub const START_MS: u32 = 35;
pub const STEP_MS: u32 = 20;
pub const MIN_MS: u32 = 15;
pub const MAX_MS: u32 = 95;
pub const BASE_DELAY_MS: u32 = 40;
pub const DIFFERENTIALS_MS: [u32; 5] = [15, 35, 55, 75, 95];
pub const NOMINAL_MS: [u32; 5] = [20, 40, 60, 80, 100];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StaircaseError {
    #[error("differential {0} ms is not reachable by the staircase")]
    InvalidDifferential(u32),
    #[error("difficulty level {0} outside 1..=5")]
    InvalidLevel(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StaircaseState {
    differential_ms: u32,
    streak: u8,
}

impl Default for StaircaseState {
    fn default() -> Self {
        Self::new()
    }
}

impl StaircaseState {
    pub fn new() -> Self {
        Self { differential_ms: START_MS, streak: 0 }
    }

    pub fn with(differential_ms: u32, streak: u8) -> Result<Self, StaircaseError> {
        if !DIFFERENTIALS_MS.contains(&differential_ms) || streak > 1 {
            return Err(StaircaseError::InvalidDifferential(differential_ms));
        }
        Ok(Self { differential_ms, streak })
    }

    pub fn differential_ms(&self) -> u32 {
        self.differential_ms
    }

    pub fn streak(&self) -> u8 {
        self.streak
    }

    pub fn level(&self) -> DifficultyLevel {
        difficulty_bin(self.differential_ms).expect("staircase differential always reachable")
    }

    #[must_use]
    pub fn update(self, correct: bool) -> Self {
        if !correct {
            return Self { differential_ms: (self.differential_ms + STEP_MS).min(MAX_MS), streak: 0 };
        }
        if self.streak == 0 {
            Self { streak: 1, ..self }
        } else {
            Self { differential_ms: self.differential_ms.saturating_sub(STEP_MS).max(MIN_MS), streak: 0 }
        }
    }
}

/// Level 1 is the hardest (smallest differential).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct DifficultyLevel(u8);

impl DifficultyLevel {
    pub fn new(level: u8) -> Result<Self, StaircaseError> {
        if (1..=5).contains(&level) {
            Ok(Self(level))
        } else {
            Err(StaircaseError::InvalidLevel(level))
        }
    }

    pub fn level(self) -> u8 {
        self.0
    }

    pub fn nominal_ms(self) -> u32 {
        NOMINAL_MS[self.index()]
    }

    pub fn index(self) -> usize {
        usize::from(self.0 - 1)
    }

    pub fn from_index(i: usize) -> Self {
        assert!(i < 5, "level index {i} out of range");
        Self(i as u8 + 1)
    }

    pub fn all() -> impl Iterator<Item = Self> {
        (0..5).map(Self::from_index)
    }
}

impl TryFrom<u8> for DifficultyLevel {
    type Error = StaircaseError;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<DifficultyLevel> for u8 {
    fn from(l: DifficultyLevel) -> u8 {
        l.0
    }
}

/// Maps a reachable differential to its nearest nominal level.
pub fn difficulty_bin(differential_ms: u32) -> Result<DifficultyLevel, StaircaseError> {
    DIFFERENTIALS_MS
        .iter()
        .position(|&d| d == differential_ms)
        .map(DifficultyLevel::from_index)
        .ok_or(StaircaseError::InvalidDifferential(differential_ms))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelayAssignment {
    pub delay_a_ms: u32,
    pub delay_b_ms: u32,
    pub lower_robot: RobotId,
}

impl DelayAssignment {
    pub fn delay_for(&self, robot: RobotId) -> u32 {
        match robot {
            RobotId::A => self.delay_a_ms,
            RobotId::B => self.delay_b_ms,
        }
    }

    pub fn differential_ms(&self) -> u32 {
        self.delay_a_ms.abs_diff(self.delay_b_ms)
    }
}

/// Base delay to one robot, base + differential to the other; the lower side
/// is a fair coin.
pub fn assign_delays<R: Rng + ?Sized>(state: &StaircaseState, rng: &mut R) -> DelayAssignment {
    let high = BASE_DELAY_MS + state.differential_ms;
    if rng.random_bool(0.5) {
        DelayAssignment { delay_a_ms: BASE_DELAY_MS, delay_b_ms: high, lower_robot: RobotId::A }
    } else {
        DelayAssignment { delay_a_ms: high, delay_b_ms: BASE_DELAY_MS, lower_robot: RobotId::B }
    }
}
