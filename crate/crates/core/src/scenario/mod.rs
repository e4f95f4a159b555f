//! Scenario files, the virtual-time runner and log replay.

mod file;
mod replay;
mod runner;

pub use file::{Action, BusSide, Event, PumpKindName, Scenario, ScenarioError, TankOverride, DEFAULT_EPOCH};
pub use replay::{replay_csv, replay_rows, Mismatch, ReplayReport, Violation};
pub use runner::{
    run_scenario, AlertCount, RunError, RunOutputs, Runner, Stat, Summary, HMI_CLIENT_ID, LOG_CHANNEL_CAPACITY,
};
