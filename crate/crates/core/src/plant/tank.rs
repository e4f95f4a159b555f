use serde::{Deserialize, Serialize};

use super::{SaturationTable, SimError};
use crate::StageId;

/// Quality vector carried by a parcel of water.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaterQuality {
    pub ph: f64,
    pub dissolved_oxygen: f64,
    pub tds: f64,
    pub ammonia: f64,
    pub water_temp: f64,
}

impl WaterQuality {
    fn components(&self) -> [f64; 5] {
        [self.ph, self.dissolved_oxygen, self.tds, self.ammonia, self.water_temp]
    }

    fn from_components(c: [f64; 5]) -> Self {
        Self { ph: c[0], dissolved_oxygen: c[1], tds: c[2], ammonia: c[3], water_temp: c[4] }
    }

    /// Volume-weighted mix of `self` (volume `v_self`) with `other` (volume `v_other`).
    pub fn mix(&self, v_self: f64, other: &WaterQuality, v_other: f64) -> WaterQuality {
        let total = v_self + v_other;
        if v_other <= 0.0 || total <= 0.0 {
            return *self;
        }
        if v_self <= 0.0 {
            return *other;
        }
        let a = self.components();
        let b = other.components();
        let mut out = [0.0; 5];
        for i in 0..5 {
            // Convex combination, then clamp to the endpoints so rounding
            // can never leave the segment.
            let w = v_other / total;
            let m = a[i] + (b[i] - a[i]) * w;
            let (lo, hi) = if a[i] <= b[i] { (a[i], b[i]) } else { (b[i], a[i]) };
            out[i] = m.clamp(lo, hi);
        }
        WaterQuality::from_components(out)
    }
}

/// Water volume and quality for one stage's tank.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TankState {
    pub stage: StageId,
    /// Litres.
    pub volume: f64,
    /// Litres.
    pub capacity: f64,
    pub ph: f64,
    /// mg/L.
    pub dissolved_oxygen: f64,
    /// ppm.
    pub tds: f64,
    /// mg/L.
    pub ammonia: f64,
    /// °C.
    pub water_temp: f64,
}

impl TankState {
    /// Fixed physical capacity of a stage's tank (litres). S1 is configurable.
    pub fn fixed_capacity(stage: StageId, s1_capacity: f64) -> f64 {
        match stage {
            StageId::S1 => s1_capacity,
            StageId::S2 | StageId::S3 | StageId::S4 => 80.0,
            StageId::S5 => 20.0,
        }
    }

    pub fn new(stage: StageId, capacity: f64, volume: f64, quality: WaterQuality) -> Self {
        let mut t = Self {
            stage,
            volume,
            capacity,
            ph: 0.0,
            dissolved_oxygen: 0.0,
            tds: 0.0,
            ammonia: 0.0,
            water_temp: 0.0,
        };
        t.set_quality(quality);
        t
    }

    pub fn quality(&self) -> WaterQuality {
        WaterQuality {
            ph: self.ph,
            dissolved_oxygen: self.dissolved_oxygen,
            tds: self.tds,
            ammonia: self.ammonia,
            water_temp: self.water_temp,
        }
    }

    pub fn set_quality(&mut self, q: WaterQuality) {
        self.ph = q.ph;
        self.dissolved_oxygen = q.dissolved_oxygen;
        self.tds = q.tds;
        self.ammonia = q.ammonia;
        self.water_temp = q.water_temp;
    }

    pub fn free_space(&self) -> f64 {
        (self.capacity - self.volume).max(0.0)
    }

    /// Checks the physical invariants of the tank.
    pub fn check(&self, saturation: &SaturationTable) -> Result<(), SimError> {
        let fail = |m: String| Err(SimError::Invariant(format!("{}: {m}", self.stage)));
        if !(self.volume >= 0.0 && self.volume <= self.capacity + 1e-9) {
            return fail(format!("volume {} outside [0, {}]", self.volume, self.capacity));
        }
        if !(0.0..=14.0).contains(&self.ph) {
            return fail(format!("pH {} outside [0, 14]", self.ph));
        }
        let sat = saturation.at(self.water_temp);
        if !(self.dissolved_oxygen >= 0.0 && self.dissolved_oxygen <= sat + 1e-9) {
            return fail(format!("DO {} outside [0, {sat}]", self.dissolved_oxygen));
        }
        if !(self.tds >= 0.0) || !(self.ammonia >= 0.0) {
            return fail(format!("negative TDS {} or ammonia {}", self.tds, self.ammonia));
        }
        if !self.water_temp.is_finite() {
            return fail("non-finite water temperature".into());
        }
        Ok(())
    }
}

/// Ambient conditions shared by every stage.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    /// °C.
    pub air_temp: f64,
    /// % relative humidity, `[0, 100]`.
    pub humidity: f64,
    /// Whether UV light reaches S3/S4. They are kept dark by default.
    pub uv_light: bool,
}

impl Environment {
    pub fn is_dark(&self, stage: StageId) -> bool {
        matches!(stage, StageId::S3 | StageId::S4) && !self.uv_light
    }
}
