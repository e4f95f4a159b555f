use serde::{Deserialize, Serialize};

use crate::actuation::bit;
use crate::plant::Channel;
use crate::StageId;

/// One telemetry sample. Field order is the wire order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorRecord {
    pub ts: f64,
    pub stage: StageId,
    pub ph: f64,
    pub tds: f64,
    #[serde(rename = "do")]
    pub dissolved_oxygen: f64,
    pub water_temp: f64,
    pub air_temp: f64,
    pub humidity: f64,
    #[serde(with = "bit")]
    pub wp: bool,
    #[serde(with = "bit")]
    pub ap: bool,
}

/// Accepted physical range per channel.
pub fn physical_range(channel: Channel) -> (f64, f64) {
    match channel {
        Channel::Ph => (0.0, 14.0),
        Channel::Do => (0.0, 20.0),
        Channel::Tds => (0.0, 5000.0),
        Channel::WaterTemp => (-10.0, 60.0),
        Channel::AirTemp => (-40.0, 70.0),
        Channel::Humidity => (0.0, 100.0),
    }
}

/// Rounds to 8 decimal places so values survive text round trips exactly.
pub fn quantize(x: f64) -> f64 {
    (x * 1e8).round() / 1e8
}

/// Rounds a timestamp to milliseconds.
pub fn quantize_ts(ts: f64) -> f64 {
    (ts * 1e3).round() / 1e3
}

impl SensorRecord {
    pub fn value(&self, channel: Channel) -> f64 {
        match channel {
            Channel::Ph => self.ph,
            Channel::Do => self.dissolved_oxygen,
            Channel::Tds => self.tds,
            Channel::WaterTemp => self.water_temp,
            Channel::AirTemp => self.air_temp,
            Channel::Humidity => self.humidity,
        }
    }

    pub fn set_value(&mut self, channel: Channel, v: f64) {
        let slot = match channel {
            Channel::Ph => &mut self.ph,
            Channel::Do => &mut self.dissolved_oxygen,
            Channel::Tds => &mut self.tds,
            Channel::WaterTemp => &mut self.water_temp,
            Channel::AirTemp => &mut self.air_temp,
            Channel::Humidity => &mut self.humidity,
        };
        *slot = v;
    }

    /// First channel outside its physical range, if any.
    pub fn out_of_range(&self) -> Option<(Channel, f64)> {
        if !self.ts.is_finite() {
            return None;
        }
        Channel::ALL.into_iter().map(|c| (c, self.value(c))).find(|&(c, v)| {
            let (lo, hi) = physical_range(c);
            !(lo..=hi).contains(&v)
        })
    }

    pub fn quantized(mut self) -> Self {
        self.ts = quantize_ts(self.ts);
        for c in Channel::ALL {
            self.set_value(c, quantize(self.value(c)));
        }
        self
    }

    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("plain struct serializes")
    }
}
