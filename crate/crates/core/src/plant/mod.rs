//! Discrete-time model of the five-stage water loop.
//!
//! Dynamics are first-order phenomenology: exponential aeration towards
//! saturation, linear dissolved-oxygen consumption by the fish, DO-gated
//! first-order nitrification and slow TDS/pH drift. Every step applies
//! the sub-models in a fixed order so trajectories are reproducible.

mod calibration;
mod circulation;
mod config;
mod ops;
mod pump;
mod saturation;
mod sensors;
mod tank;
mod world;

pub use calibration::{
    do_to_voltage, ph_to_voltage, tds_to_voltage, voltage_to_do, voltage_to_ph, voltage_to_tds,
    DO_FULL_SCALE, PH_ANCHORS, TDS_FULL_SCALE, TDS_FULL_SCALE_VOLTS, VREF,
};
pub use circulation::{CirculationScheduler, CirculationStatus};
pub use config::{EnvironmentConfig, FreshWater, PumpConfig, RateCoefficients, SimConfig};
pub use ops::{movable_volume, nitrify, supply_to_stage1, transfer, TransferOutcome, NITRIFICATION_DO_GATE};
pub use pump::{PumpKind, PumpSpec, Route};
pub use saturation::SaturationTable;
pub use sensors::{read_sensors, Channel, RawReadings, SensorNoise};
pub use tank::{Environment, TankState, WaterQuality};
pub use world::{SimEvent, StepReport, World};

use crate::StageId;

/// Errors raised by the plant model.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("step dt {dt} s outside (0, {max}] s")]
    InvalidStep { dt: f64, max: f64 },
    #[error("pump {src}->{dst} is not a running water pump")]
    PumpNotRunning { src: StageId, dst: StageId },
    #[error("nitrification only applies to S3/S4, got {0}")]
    NotANitrificationStage(StageId),
    #[error("invalid sim config: {0}")]
    Config(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
}
