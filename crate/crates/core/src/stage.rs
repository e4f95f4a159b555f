use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// One of the five physical stages of the water loop.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StageId {
    /// Vertical vegetable unit plus its storage reservoir.
    S1,
    /// Fish tank.
    S2,
    /// Natural nitrification tank.
    S3,
    /// Bio-filtration tank.
    S4,
    /// Accumulation tank feeding Stage-1 by gravity.
    S5,
}

impl StageId {
    pub const ALL: [StageId; 5] = [StageId::S1, StageId::S2, StageId::S3, StageId::S4, StageId::S5];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Stage number as used in topic names (`cypha/stage{N}/...`).
    pub fn number(self) -> u8 {
        self as u8 + 1
    }

    pub fn from_number(n: u8) -> Option<StageId> {
        match n {
            1..=5 => Some(Self::ALL[usize::from(n - 1)]),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StageId::S1 => "S1",
            StageId::S2 => "S2",
            StageId::S3 => "S3",
            StageId::S4 => "S4",
            StageId::S5 => "S5",
        }
    }

    pub fn sensing_topic(self) -> String {
        format!("cypha/stage{}/sensing", self.number())
    }

    pub fn actuating_topic(self) -> String {
        format!("cypha/stage{}/actuating", self.number())
    }

    pub fn manual_topic(self) -> String {
        format!("cypha/stage{}/manual", self.number())
    }

    /// Key id used by the stage's edge device when sealing envelopes.
    pub fn key_id(self) -> String {
        format!("stage{}", self.number())
    }
}

impl fmt::Display for StageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("unknown stage `{0}` (expected S1..S5)")]
pub struct ParseStageError(String);

impl FromStr for StageId {
    type Err = ParseStageError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "S1" | "s1" => Ok(StageId::S1),
            "S2" | "s2" => Ok(StageId::S2),
            "S3" | "s3" => Ok(StageId::S3),
            "S4" | "s4" => Ok(StageId::S4),
            "S5" | "s5" => Ok(StageId::S5),
            other => Err(ParseStageError(other.to_owned())),
        }
    }
}
