use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::ControllerConfig;
use crate::actuation::Output;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FsmState {
    #[default]
    Q1,
    Q2,
    Q3,
    Q4,
}

/// Readings classified by range membership.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputSymbol {
    /// pH in, DO in.
    A,
    /// pH in, DO out.
    B,
    /// pH out, DO in.
    C,
    /// pH out, DO out.
    D,
}

impl FsmState {
    pub const ALL: [FsmState; 4] = [FsmState::Q1, FsmState::Q2, FsmState::Q3, FsmState::Q4];

    /// Moore output: q1 → 00, q2 → 01, q3 → 10, q4 → 11 (water pump bit first).
    pub fn output(self) -> Output {
        match self {
            FsmState::Q1 => Output::new(false, false),
            FsmState::Q2 => Output::new(false, true),
            FsmState::Q3 => Output::new(true, false),
            FsmState::Q4 => Output::new(true, true),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FsmState::Q1 => "q1",
            FsmState::Q2 => "q2",
            FsmState::Q3 => "q3",
            FsmState::Q4 => "q4",
        }
    }
}

impl fmt::Display for FsmState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FsmState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FsmState::ALL.into_iter().find(|q| q.as_str() == s).ok_or_else(|| format!("unknown state `{s}`"))
    }
}

impl InputSymbol {
    pub const ALL: [InputSymbol; 4] = [InputSymbol::A, InputSymbol::B, InputSymbol::C, InputSymbol::D];

    pub fn from_membership(ph_in: bool, do_in: bool) -> Self {
        match (ph_in, do_in) {
            (true, true) => InputSymbol::A,
            (true, false) => InputSymbol::B,
            (false, true) => InputSymbol::C,
            (false, false) => InputSymbol::D,
        }
    }
}

pub fn classify(ph: f64, dissolved_oxygen: f64, cfg: &ControllerConfig) -> InputSymbol {
    InputSymbol::from_membership(cfg.ph_permissible.contains(ph), cfg.do_permissible.contains(dissolved_oxygen))
}

/// Every state has all four edges, so the symbol alone picks the next state.
pub fn fsm_step(_state: FsmState, symbol: InputSymbol) -> (FsmState, Output) {
    let next = match symbol {
        InputSymbol::A => FsmState::Q1,
        InputSymbol::B => FsmState::Q2,
        InputSymbol::C => FsmState::Q3,
        InputSymbol::D => FsmState::Q4,
    };
    (next, next.output())
}
