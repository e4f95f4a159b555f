use serde::Serialize;

use super::config::ControllerConfig;
use crate::edge::SensorRecord;

/// Plant-level actions taken above the FSM.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum SupervisorAction {
    /// Run one coordinated circulation cycle through the loop.
    Circulate,
    /// Route Stage-1 water back through S5 for `seconds`.
    Recirculate { seconds: f64, attempt: u32 },
    /// Discard `fraction` of Stage-1 water and take in fresh water.
    RejectWater { fraction: f64 },
}

/// Circulation timer plus the re-circulate / reject policy for bad pH or TDS.
#[derive(Clone, Debug)]
pub struct Supervisor {
    cfg: ControllerConfig,
    next_circulation: Option<f64>,
    recirculating_until: Option<f64>,
    failed: u32,
    recirculations: u64,
    rejections: u64,
}

impl Supervisor {
    pub fn new(cfg: ControllerConfig) -> Self {
        let next_circulation = (cfg.circulation_per_hour > 0.0).then(|| 3600.0 / cfg.circulation_per_hour);
        Self { cfg, next_circulation, recirculating_until: None, failed: 0, recirculations: 0, rejections: 0 }
    }

    pub fn recirculations(&self) -> u64 {
        self.recirculations
    }

    pub fn rejections(&self) -> u64 {
        self.rejections
    }

    pub fn on_tick(&mut self, now: f64) -> Option<SupervisorAction> {
        let due = self.next_circulation.filter(|&t| now >= t)?;
        let period = 3600.0 / self.cfg.circulation_per_hour;
        let mut next = due + period;
        while next <= now {
            next += period;
        }
        self.next_circulation = Some(next);
        Some(SupervisorAction::Circulate)
    }

    /// `now` is virtual seconds; the record timestamp is not used.
    pub fn on_record(&mut self, rec: &SensorRecord, now: f64) -> Option<SupervisorAction> {
        let bad = !self.cfg.ph_permissible.contains(rec.ph) || !self.cfg.tds_permissible.contains(rec.tds);
        if let Some(until) = self.recirculating_until {
            if now < until {
                return None;
            }
            self.recirculating_until = None;
            if !bad {
                self.failed = 0;
                return None;
            }
            self.failed += 1;
            if self.failed >= self.cfg.recirculation_limit {
                self.failed = 0;
                self.rejections += 1;
                return Some(SupervisorAction::RejectWater { fraction: self.cfg.reject_fraction });
            }
        }
        if !bad {
            return None;
        }
        self.recirculations += 1;
        self.recirculating_until = Some(now + self.cfg.stage1_pump_duration);
        Some(SupervisorAction::Recirculate { seconds: self.cfg.stage1_pump_duration, attempt: self.failed + 1 })
    }
}
