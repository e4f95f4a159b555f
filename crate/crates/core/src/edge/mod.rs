//! Per-stage edge agents.

mod agent;
mod alert;
mod record;

pub use agent::{EdgeAgent, EdgeConfig, EdgeEvent, EdgeStats, SensorFault, BUFFER_CAPACITY, SAMPLE_PERIOD};
pub use alert::{update_alert, AlertParam, AlertState, AlertThresholds};
pub use record::{physical_range, quantize, quantize_ts, SensorRecord};
