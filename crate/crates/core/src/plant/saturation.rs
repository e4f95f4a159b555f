use serde::{Deserialize, Serialize};

use super::SimError;

/// Dissolved-oxygen saturation (mg/L) keyed by water temperature (°C).
///
/// Linear interpolation between points, flat beyond the table ends.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct SaturationTable {
    points: Vec<(f64, f64)>,
}

impl SaturationTable {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, SimError> {
        if points.len() < 2 {
            return Err(SimError::Config("saturation table needs at least two points".into()));
        }
        for w in points.windows(2) {
            let ((t0, s0), (t1, s1)) = (w[0], w[1]);
            if !(t0 < t1) {
                return Err(SimError::Config(format!(
                    "saturation temperatures must be strictly increasing ({t0} then {t1})"
                )));
            }
            if !(s0 > s1) {
                return Err(SimError::Config(format!(
                    "saturation must strictly decrease with temperature ({s0} at {t0} °C, {s1} at {t1} °C)"
                )));
            }
        }
        if points.iter().any(|&(t, s)| !t.is_finite() || !(s > 0.0) || !s.is_finite()) {
            return Err(SimError::Config("saturation values must be finite and positive".into()));
        }
        Ok(Self { points })
    }

    pub fn at(&self, temp: f64) -> f64 {
        let first = self.points[0];
        let last = self.points[self.points.len() - 1];
        if temp <= first.0 {
            return first.1;
        }
        if temp >= last.0 {
            return last.1;
        }
        let i = self.points.partition_point(|&(t, _)| t <= temp);
        let (t0, s0) = self.points[i - 1];
        let (t1, s1) = self.points[i];
        s0 + (s1 - s0) * (temp - t0) / (t1 - t0)
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }
}

impl Default for SaturationTable {
    /// Fresh water at sea-level pressure.
    fn default() -> Self {
        Self::new(vec![
            (0.0, 14.62),
            (5.0, 12.77),
            (10.0, 11.29),
            (15.0, 10.08),
            (20.0, 9.09),
            (25.0, 8.26),
            (30.0, 7.56),
            (35.0, 6.95),
            (40.0, 6.41),
        ])
        .expect("default table is valid")
    }
}

impl TryFrom<Vec<[f64; 2]>> for SaturationTable {
    type Error = SimError;

    fn try_from(v: Vec<[f64; 2]>) -> Result<Self, Self::Error> {
        Self::new(v.into_iter().map(|[t, s]| (t, s)).collect())
    }
}

impl From<SaturationTable> for Vec<[f64; 2]> {
    fn from(t: SaturationTable) -> Self {
        t.points.into_iter().map(|(a, b)| [a, b]).collect()
    }
}
