use serde::{Deserialize, Serialize};

use crate::actuation::DEFAULT_MANUAL_EXPIRY;
use crate::edge::AlertThresholds;
use crate::Interval;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("invalid controller config: {0}")]
    Invalid(String),
    #[error("controller config parse error: {0}")]
    Parse(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub ph_permissible: Interval,
    pub do_permissible: Interval,
    pub tds_permissible: Interval,
    /// Alerting only; the FSM does not look at temperature.
    pub water_temp_permissible: Interval,
    /// Seconds between logged rows.
    pub log_interval: f64,
    /// Forced circulation cycles per hour; 0 disables the timer.
    pub circulation_per_hour: f64,
    /// Failed re-circulations before the water is rejected.
    pub recirculation_limit: u32,
    /// How long the Stage-1 pump re-circulates after a pH/TDS violation, seconds.
    pub stage1_pump_duration: f64,
    /// Fraction of Stage-1 water replaced when it is rejected.
    pub reject_fraction: f64,
    pub manual_expiry: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        let th = AlertThresholds::default();
        Self {
            ph_permissible: th.ph,
            do_permissible: th.dissolved_oxygen,
            tds_permissible: th.tds,
            water_temp_permissible: th.water_temp,
            log_interval: 8.64,
            circulation_per_hour: 1.0,
            recirculation_limit: 3,
            stage1_pump_duration: 120.0,
            reject_fraction: 0.5,
            manual_expiry: DEFAULT_MANUAL_EXPIRY,
        }
    }
}

impl ControllerConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(s).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_owned()));
        if !(self.log_interval.is_finite() && self.log_interval >= 0.001) {
            return bad("log_interval must be at least 1 ms");
        }
        if !(self.circulation_per_hour.is_finite() && self.circulation_per_hour >= 0.0) {
            return bad("circulation_per_hour must be non-negative");
        }
        if self.recirculation_limit == 0 {
            return bad("recirculation_limit must be at least 1");
        }
        if !(self.stage1_pump_duration.is_finite() && self.stage1_pump_duration > 0.0) {
            return bad("stage1_pump_duration must be positive");
        }
        if !(self.reject_fraction > 0.0 && self.reject_fraction <= 1.0) {
            return bad("reject_fraction must be in (0, 1]");
        }
        if !(self.manual_expiry.is_finite() && self.manual_expiry > 0.0) {
            return bad("manual_expiry must be positive");
        }
        Ok(())
    }

    pub fn thresholds(&self) -> AlertThresholds {
        AlertThresholds {
            ph: self.ph_permissible,
            dissolved_oxygen: self.do_permissible,
            tds: self.tds_permissible,
            water_temp: self.water_temp_permissible,
        }
    }

    /// Log interval in whole milliseconds.
    pub fn log_interval_ms(&self) -> u64 {
        (self.log_interval * 1000.0).round() as u64
    }
}
