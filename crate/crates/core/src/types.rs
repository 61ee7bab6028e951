//! Small value types shared across the crate.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RobotId {
    A,
    B,
}

impl RobotId {
    pub fn other(self) -> Self {
        match self {
            RobotId::A => RobotId::B,
            RobotId::B => RobotId::A,
        }
    }
}

impl fmt::Display for RobotId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RobotId::A => "A",
            RobotId::B => "B",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown robot `{0}`")]
pub struct ParseRobotError(pub String);

impl FromStr for RobotId {
    type Err = ParseRobotError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" | "a" => Ok(RobotId::A),
            "B" | "b" => Ok(RobotId::B),
            other => Err(ParseRobotError(other.to_string())),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("confidence {0} outside 1..=4")]
pub struct InvalidConfidence(pub i64);

/// Four-point Likert confidence, 1 lowest to 4 highest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "u8")]
pub struct LikertConfidence(u8);

impl LikertConfidence {
    pub const MIN: u8 = 1;
    pub const MAX: u8 = 4;

    pub fn new(value: i64) -> Result<Self, InvalidConfidence> {
        if (i64::from(Self::MIN)..=i64::from(Self::MAX)).contains(&value) {
            Ok(Self(value as u8))
        } else {
            Err(InvalidConfidence(value))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    /// Zero-based bin index, 0..4.
    pub fn index(self) -> usize {
        usize::from(self.0 - 1)
    }

    pub fn from_index(i: usize) -> Self {
        assert!(i < 4, "confidence bin {i} out of range");
        Self(i as u8 + 1)
    }

    pub fn all() -> impl Iterator<Item = Self> {
        (0..4).map(Self::from_index)
    }
}

impl TryFrom<i64> for LikertConfidence {
    type Error = InvalidConfidence;
    fn try_from(v: i64) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<LikertConfidence> for u8 {
    fn from(c: LikertConfidence) -> u8 {
        c.0
    }
}

impl fmt::Display for LikertConfidence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A robot choice with a confidence rating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Inference {
    pub choice: RobotId,
    pub confidence: LikertConfidence,
}

impl Inference {
    pub fn new(choice: RobotId, confidence: LikertConfidence) -> Self {
        Self { choice, confidence }
    }

    /// Convenience constructor for literals; panics on a bad confidence.
    pub fn of(choice: RobotId, confidence: u8) -> Self {
        Self::new(choice, LikertConfidence::new(i64::from(confidence)).expect("confidence in 1..=4"))
    }
}
