use std::fmt;

use serde::{Deserialize, Serialize};

use crate::StageId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PumpKind {
    Water,
    Aeration,
}

/// A pump and its switch state. `rate` is L/h for water pumps and L/min
/// of air for aeration pumps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PumpSpec {
    pub kind: PumpKind,
    rate: f64,
    pub on: bool,
    /// Injected fault: a failed pump never runs, whatever its switch says.
    pub failed: bool,
}

impl PumpSpec {
    pub fn water(rate_lph: f64) -> Self {
        Self::new(PumpKind::Water, rate_lph)
    }

    pub fn aeration(rate_lpm: f64) -> Self {
        Self::new(PumpKind::Aeration, rate_lpm)
    }

    fn new(kind: PumpKind, rate: f64) -> Self {
        assert!(rate > 0.0 && rate.is_finite(), "pump rate must be positive, got {rate}");
        Self { kind, rate, on: false, failed: false }
    }

    pub fn with_on(mut self, on: bool) -> Self {
        self.on = on;
        self
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn is_running(&self) -> bool {
        self.on && !self.failed
    }

    /// Water volume moved per second at full rate.
    pub fn liters_per_second(&self) -> f64 {
        match self.kind {
            PumpKind::Water => self.rate / 3600.0,
            PumpKind::Aeration => 0.0,
        }
    }
}

/// Fixed water paths between tanks, listed in transfer order.
///
/// Downstream links move first so a coordinated circulation frees space
/// before upstream water arrives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Route {
    S4ToS5,
    S3ToS4,
    S2ToS3,
    S1ToS2,
    S1ToS5,
    /// Gravity supply line back into the vegetable unit.
    S5ToS1,
}

impl Route {
    pub const ORDER: [Route; 6] =
        [Route::S4ToS5, Route::S3ToS4, Route::S2ToS3, Route::S1ToS2, Route::S1ToS5, Route::S5ToS1];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn src(self) -> StageId {
        match self {
            Route::S4ToS5 => StageId::S4,
            Route::S3ToS4 => StageId::S3,
            Route::S2ToS3 => StageId::S2,
            Route::S1ToS2 | Route::S1ToS5 => StageId::S1,
            Route::S5ToS1 => StageId::S5,
        }
    }

    pub fn dst(self) -> StageId {
        match self {
            Route::S4ToS5 | Route::S1ToS5 => StageId::S5,
            Route::S3ToS4 => StageId::S4,
            Route::S2ToS3 => StageId::S3,
            Route::S1ToS2 => StageId::S2,
            Route::S5ToS1 => StageId::S1,
        }
    }
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.src(), self.dst())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rates() {
        let p = PumpSpec::water(900.0).with_on(true);
        assert_eq!(p.liters_per_second(), 0.25);
        assert!(p.is_running());
        let mut failed = p;
        failed.failed = true;
        assert!(!failed.is_running());
        assert_eq!(PumpSpec::aeration(3.0).liters_per_second(), 0.0);
    }

    #[test]
    fn routes_are_distinct_links() {
        for r in Route::ORDER {
            assert_ne!(r.src(), r.dst());
            assert_eq!(Route::ORDER[r.index()], r);
        }
    }
}
