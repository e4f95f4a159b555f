use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::record::SensorRecord;
use crate::Interval;

/// Parameters watched by the LED indicator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlertParam {
    Ph,
    Do,
    Tds,
    WaterTemp,
}

impl AlertParam {
    pub const ALL: [AlertParam; 4] = [AlertParam::Ph, AlertParam::Do, AlertParam::Tds, AlertParam::WaterTemp];

    pub fn as_str(self) -> &'static str {
        match self {
            AlertParam::Ph => "ph",
            AlertParam::Do => "do",
            AlertParam::Tds => "tds",
            AlertParam::WaterTemp => "water_temp",
        }
    }

    pub fn value(self, rec: &SensorRecord) -> f64 {
        match self {
            AlertParam::Ph => rec.ph,
            AlertParam::Do => rec.dissolved_oxygen,
            AlertParam::Tds => rec.tds,
            AlertParam::WaterTemp => rec.water_temp,
        }
    }
}

impl fmt::Display for AlertParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlertThresholds {
    pub ph: Interval,
    #[serde(rename = "do")]
    pub dissolved_oxygen: Interval,
    pub tds: Interval,
    pub water_temp: Interval,
}

impl Default for AlertThresholds {
    fn default() -> Self {
        Self {
            ph: Interval::new(6.5, 8.5).expect("valid"),
            dissolved_oxygen: Interval::new(3.5, 5.0).expect("valid"),
            tds: Interval::new(300.0, 500.0).expect("valid"),
            water_temp: Interval::new(20.0, 32.0).expect("valid"),
        }
    }
}

impl AlertThresholds {
    pub fn range(&self, p: AlertParam) -> Interval {
        match p {
            AlertParam::Ph => self.ph,
            AlertParam::Do => self.dissolved_oxygen,
            AlertParam::Tds => self.tds,
            AlertParam::WaterTemp => self.water_temp,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlertState {
    pub led: bool,
    pub violated: BTreeSet<AlertParam>,
}

pub fn update_alert(rec: &SensorRecord, th: &AlertThresholds) -> AlertState {
    let violated: BTreeSet<AlertParam> =
        AlertParam::ALL.into_iter().filter(|&p| !th.range(p).contains(p.value(rec))).collect();
    AlertState { led: !violated.is_empty(), violated }
}
