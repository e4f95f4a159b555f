//! Stage-2 controller: telemetry parsing, the Moore machine, command
//! publishing and supervisory water management.

mod config;
mod fsm;
mod node;
mod supervisor;
mod telemetry;

pub use config::{ConfigError, ControllerConfig};
pub use fsm::{classify, fsm_step, FsmState, InputSymbol};
pub use node::{Controller, ControllerEvent, ControllerStats, ControllerStatus, CONTROLLER_KEY, STATUS_TOPIC};
pub use supervisor::{Supervisor, SupervisorAction};
pub use telemetry::{parse_telemetry, TelemetryError};
