//! Analog sensor calibration curves.
//!
//! The pH probe uses its three factory anchors; DO and TDS probes are
//! modelled as linear over their output range.

/// ADC reference voltage.
pub const VREF: f64 = 5.0;

/// `(volts, pH)` factory calibration anchors.
pub const PH_ANCHORS: [(f64, f64); 3] = [(1.5, 4.0), (2.0, 7.0), (3.0, 9.0)];

/// DO probe: 0..DO_FULL_SCALE mg/L maps linearly onto 0..VREF volts.
pub const DO_FULL_SCALE: f64 = 20.0;

/// TDS probe: 0..TDS_FULL_SCALE ppm maps linearly onto 0..TDS_FULL_SCALE_VOLTS.
pub const TDS_FULL_SCALE: f64 = 1000.0;
pub const TDS_FULL_SCALE_VOLTS: f64 = 2.3;

fn lerp(x: f64, (x0, y0): (f64, f64), (x1, y1): (f64, f64)) -> f64 {
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Piecewise-linear through [`PH_ANCHORS`], extrapolating the outer segments,
/// clamped to `[0, 14]`.
pub fn voltage_to_ph(v: f64) -> f64 {
    let [a, b, c] = PH_ANCHORS;
    let ph = if v < b.0 { lerp(v, a, b) } else { lerp(v, b, c) };
    ph.clamp(0.0, 14.0)
}

/// Inverse of [`voltage_to_ph`], clamped to the ADC range.
pub fn ph_to_voltage(ph: f64) -> f64 {
    let [a, b, c] = PH_ANCHORS;
    let flip = |(v, p): (f64, f64)| (p, v);
    let v = if ph < b.1 { lerp(ph, flip(a), flip(b)) } else { lerp(ph, flip(b), flip(c)) };
    v.clamp(0.0, VREF)
}

pub fn voltage_to_do(v: f64) -> f64 {
    (v / VREF * DO_FULL_SCALE).clamp(0.0, DO_FULL_SCALE)
}

pub fn do_to_voltage(do_mg_l: f64) -> f64 {
    (do_mg_l / DO_FULL_SCALE * VREF).clamp(0.0, VREF)
}

pub fn voltage_to_tds(v: f64) -> f64 {
    (v / TDS_FULL_SCALE_VOLTS * TDS_FULL_SCALE).max(0.0)
}

pub fn tds_to_voltage(tds: f64) -> f64 {
    (tds / TDS_FULL_SCALE * TDS_FULL_SCALE_VOLTS).clamp(0.0, VREF)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn anchors() {
        assert_eq!(voltage_to_ph(1.5), 4.0);
        assert_eq!(voltage_to_ph(2.0), 7.0);
        assert_eq!(voltage_to_ph(3.0), 9.0);
        assert_eq!(ph_to_voltage(7.0), 2.0);
        assert_eq!(ph_to_voltage(4.0), 1.5);
    }

    #[test]
    fn interpolates_first_segment() {
        // (1.5, 4.0)-(2.0, 7.0): slope 6 pH/V, 0.25 V in.
        assert!((voltage_to_ph(1.75) - 5.5).abs() < 1e-12);
    }

    #[test]
    fn extrapolates_and_clamps() {
        // Below 1.5 V the first segment continues: 1.0 V -> 4 - 3 = 1.0.
        assert!((voltage_to_ph(1.0) - 1.0).abs() < 1e-12);
        assert_eq!(voltage_to_ph(0.0), 0.0);
        // Above 3 V the second segment continues at 2 pH/V.
        assert!((voltage_to_ph(4.0) - 11.0).abs() < 1e-12);
        assert_eq!(voltage_to_ph(5.0), 13.0);
        assert_eq!(voltage_to_ph(9.0), 14.0);
    }

    #[test]
    fn linear_probes() {
        assert!((voltage_to_do(do_to_voltage(4.2)) - 4.2).abs() < 1e-12);
        assert!((voltage_to_tds(tds_to_voltage(412.0)) - 412.0).abs() < 1e-9);
        assert_eq!(do_to_voltage(5.0), 1.25);
    }

    proptest! {
        #[test]
        fn ph_round_trip(p in 4.0f64..=9.0) {
            prop_assert!((voltage_to_ph(ph_to_voltage(p)) - p).abs() < 1e-9);
        }
    }
}
