use super::{PumpKind, PumpSpec, SimError, TankState};
use crate::StageId;

/// Dissolved oxygen below this (mg/L) halts nitrification.
pub const NITRIFICATION_DO_GATE: f64 = 2.0;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TransferOutcome {
    /// Litres actually moved.
    pub moved: f64,
    /// Litres the pump tried to move.
    pub requested: f64,
    /// Destination capacity cut the transfer short.
    pub overflow: bool,
    /// Source was empty.
    pub dry_run: bool,
}

/// `min(requested, src.volume, dst free space)`.
pub fn movable_volume(requested: f64, src: &TankState, dst: &TankState) -> f64 {
    requested.min(src.volume).min(dst.free_space()).max(0.0)
}

/// Pumps water from `src` into `dst` for `dt` seconds.
///
/// The destination quality becomes the volume-weighted mix of what it held
/// and what arrived. A full destination clamps the transfer and reports
/// `overflow`; an empty source reports `dry_run`.
pub fn transfer(
    src: &mut TankState,
    dst: &mut TankState,
    pump: &PumpSpec,
    dt: f64,
) -> Result<TransferOutcome, SimError> {
    if pump.kind != PumpKind::Water || !pump.is_running() {
        return Err(SimError::PumpNotRunning { src: src.stage, dst: dst.stage });
    }
    Ok(move_water(src, dst, pump.liters_per_second() * dt))
}

pub(crate) fn move_water(src: &mut TankState, dst: &mut TankState, requested: f64) -> TransferOutcome {
    if src.volume <= 0.0 {
        return TransferOutcome { moved: 0.0, requested, overflow: false, dry_run: true };
    }
    let moved = movable_volume(requested, src, dst);
    let overflow = requested.min(src.volume) > dst.free_space();
    if moved > 0.0 {
        let mixed = dst.quality().mix(dst.volume, &src.quality(), moved);
        dst.set_quality(mixed);
        // Drain to exactly zero when the whole tank moved so no residue
        // accumulates from subtraction rounding.
        if moved >= src.volume {
            dst.volume += src.volume;
            src.volume = 0.0;
        } else {
            src.volume -= moved;
            dst.volume += moved;
        }
    }
    TransferOutcome { moved, requested, overflow, dry_run: false }
}

/// Gravity drain of the Stage-5 tank at `rate_lph`. Returns litres delivered.
pub fn supply_to_stage1(s5: &mut TankState, rate_lph: f64, dt: f64) -> f64 {
    let delivered = (rate_lph / 3600.0 * dt).min(s5.volume).max(0.0);
    s5.volume = if delivered >= s5.volume { 0.0 } else { s5.volume - delivered };
    delivered
}

/// First-order ammonia conversion, gated on dissolved oxygen.
pub fn nitrify(tank: &mut TankState, k_nitrification: f64, dt: f64) -> Result<(), SimError> {
    if !matches!(tank.stage, StageId::S3 | StageId::S4) {
        return Err(SimError::NotANitrificationStage(tank.stage));
    }
    if tank.dissolved_oxygen >= NITRIFICATION_DO_GATE && tank.ammonia > 0.0 {
        tank.ammonia *= (-k_nitrification * dt).exp();
    }
    Ok(())
}
