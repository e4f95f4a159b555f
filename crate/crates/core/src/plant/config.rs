use serde::{Deserialize, Serialize};

use super::{SaturationTable, SimError};

/// Rate coefficients for the phenomenological dynamics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateCoefficients {
    /// Aeration transfer coefficient at the rated air flow, 1/s.
    pub k_aeration: f64,
    /// Fish respiration in S2, mg/L/s.
    pub k_do_consumption: f64,
    /// First-order ammonia conversion in S3/S4, 1/s.
    pub k_nitrification: f64,
    /// TDS accretion from fish waste in S2, ppm/s.
    pub k_tds_accretion: f64,
    /// Acidification drift in S2, pH/s.
    pub k_ph_drift: f64,
    /// Ammonia excretion in S2, mg/L/s.
    pub k_ammonia_excretion: f64,
    /// Water temperature relaxation towards air temperature, 1/s.
    pub k_thermal: f64,
    /// Plant uptake in S1 (TDS towards baseline, ammonia decay), 1/s.
    pub k_plant_uptake: f64,
    /// pH buffering in S1 towards `ph_buffer_target`, 1/s.
    pub k_ph_buffer: f64,
    pub ph_buffer_target: f64,
    pub tds_baseline: f64,
}

impl Default for RateCoefficients {
    fn default() -> Self {
        Self {
            k_aeration: 2.5e-4,
            k_do_consumption: 1.0 / 3600.0,
            k_nitrification: 1.0e-4,
            k_tds_accretion: 5.0e-3,
            k_ph_drift: 2.0e-5,
            k_ammonia_excretion: 1.0e-4,
            k_thermal: 1.0 / 21_600.0,
            k_plant_uptake: 5.0e-5,
            k_ph_buffer: 5.0e-5,
            ph_buffer_target: 7.0,
            tds_baseline: 250.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PumpConfig {
    /// Transfer pumps between stages, L/h.
    pub water_rate_lph: f64,
    /// S4 -> S5 fill, L/h.
    pub s5_fill_rate_lph: f64,
    /// S5 -> S1 gravity supply, L/h.
    pub s5_drain_rate_lph: f64,
    /// Aeration pumps, L of air per minute.
    pub aeration_rate_lpm: f64,
    pub s5_supply_enabled: bool,
    /// Stages whose aerators run continuously regardless of commands.
    pub always_aerated: Vec<crate::StageId>,
}

impl Default for PumpConfig {
    fn default() -> Self {
        Self {
            water_rate_lph: 900.0,
            s5_fill_rate_lph: 600.0,
            s5_drain_rate_lph: 10.0,
            aeration_rate_lpm: 3.0,
            s5_supply_enabled: true,
            always_aerated: vec![crate::StageId::S3, crate::StageId::S4],
        }
    }
}

/// Diurnal air conditions around the tanks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvironmentConfig {
    pub air_temp_mean: f64,
    pub air_temp_amplitude: f64,
    pub humidity_mean: f64,
    pub humidity_amplitude: f64,
    pub uv_light: bool,
}

impl Default for EnvironmentConfig {
    fn default() -> Self {
        Self {
            air_temp_mean: 28.0,
            air_temp_amplitude: 3.0,
            humidity_mean: 60.0,
            humidity_amplitude: 10.0,
            uv_light: false,
        }
    }
}

/// Quality of water brought in from outside the loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FreshWater {
    pub ph: f64,
    pub dissolved_oxygen: f64,
    pub tds: f64,
    pub ammonia: f64,
    pub water_temp: f64,
}

impl Default for FreshWater {
    fn default() -> Self {
        Self { ph: 7.0, dissolved_oxygen: 7.5, tds: 150.0, ammonia: 0.0, water_temp: 26.0 }
    }
}

/// Plant-model configuration. Every field has a documented default so an
/// empty file is a valid config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Upper bound on a single step, seconds. Runs use exactly this step.
    pub dt: f64,
    pub rng_seed: u64,
    /// Sensor noise half-width as a fraction of each channel's full scale.
    pub noise_fraction: f64,
    /// Stage-1 reservoir capacity, litres.
    pub s1_capacity: f64,
    pub rates: RateCoefficients,
    pub pumps: PumpConfig,
    pub environment: EnvironmentConfig,
    pub fresh_water: FreshWater,
    pub do_saturation: SaturationTable,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1.0,
            rng_seed: 0,
            noise_fraction: 0.01,
            s1_capacity: 100.0,
            rates: RateCoefficients::default(),
            pumps: PumpConfig::default(),
            environment: EnvironmentConfig::default(),
            fresh_water: FreshWater::default(),
            do_saturation: SaturationTable::default(),
        }
    }
}

impl SimConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, SimError> {
        let cfg: SimConfig = toml::from_str(s).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be > 0, got {}", self.dt));
        }
        let r = &self.rates;
        let coeffs = [
            ("k_aeration", r.k_aeration),
            ("k_do_consumption", r.k_do_consumption),
            ("k_nitrification", r.k_nitrification),
            ("k_tds_accretion", r.k_tds_accretion),
            ("k_ph_drift", r.k_ph_drift),
            ("k_ammonia_excretion", r.k_ammonia_excretion),
            ("k_thermal", r.k_thermal),
            ("k_plant_uptake", r.k_plant_uptake),
            ("k_ph_buffer", r.k_ph_buffer),
            ("noise_fraction", self.noise_fraction),
        ];
        for (name, v) in coeffs {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be >= 0, got {v}"));
            }
        }
        let p = &self.pumps;
        for (name, v) in [
            ("water_rate_lph", p.water_rate_lph),
            ("s5_fill_rate_lph", p.s5_fill_rate_lph),
            ("s5_drain_rate_lph", p.s5_drain_rate_lph),
            ("aeration_rate_lpm", p.aeration_rate_lpm),
            ("s1_capacity", self.s1_capacity),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be > 0, got {v}"));
            }
        }
        let e = &self.environment;
        if !(0.0..=100.0).contains(&(e.humidity_mean - e.humidity_amplitude.abs()))
            || !(0.0..=100.0).contains(&(e.humidity_mean + e.humidity_amplitude.abs()))
        {
            return bad("humidity must stay within [0, 100] %".into());
        }
        if !(0.0..=14.0).contains(&r.ph_buffer_target) {
            return bad("ph_buffer_target must lie in [0, 14]".into());
        }
        Ok(())
    }
}
