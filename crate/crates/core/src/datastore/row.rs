use serde::{Deserialize, Serialize};

use crate::actuation::{bit, Output};
use crate::edge::{quantize, quantize_ts, SensorRecord};

/// Column names, in file order.
pub const CSV_HEADER: [&str; 9] = ["timestamp", "ph", "tds", "do", "water_temp", "air_temp", "humidity", "wp", "ap"];

/// One logged sample with the controller's output for it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogRow {
    /// Unix seconds, millisecond precision.
    pub timestamp: f64,
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

impl LogRow {
    pub fn from_record(rec: &SensorRecord, out: Output) -> Self {
        Self {
            timestamp: rec.ts,
            ph: rec.ph,
            tds: rec.tds,
            dissolved_oxygen: rec.dissolved_oxygen,
            water_temp: rec.water_temp,
            air_temp: rec.air_temp,
            humidity: rec.humidity,
            wp: out.wp,
            ap: out.ap,
        }
        .quantized()
    }

    pub fn output(&self) -> Output {
        Output::new(self.wp, self.ap)
    }

    /// Rounds to the precision the CSV carries, so export and import are exact.
    pub fn quantized(mut self) -> Self {
        self.timestamp = quantize_ts(self.timestamp);
        for v in [
            &mut self.ph,
            &mut self.tds,
            &mut self.dissolved_oxygen,
            &mut self.water_temp,
            &mut self.air_temp,
            &mut self.humidity,
        ] {
            *v = quantize(*v);
        }
        self
    }

    pub fn csv_fields(&self) -> [String; 9] {
        [
            format!("{:.3}", self.timestamp),
            format!("{:.8}", self.ph),
            format!("{:.8}", self.tds),
            format!("{:.8}", self.dissolved_oxygen),
            format!("{:.8}", self.water_temp),
            format!("{:.8}", self.air_temp),
            format!("{:.8}", self.humidity),
            u8::from(self.wp).to_string(),
            u8::from(self.ap).to_string(),
        ]
    }
}
