use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::calibration::{do_to_voltage, ph_to_voltage, tds_to_voltage, DO_FULL_SCALE, TDS_FULL_SCALE};
use super::{Environment, TankState};

/// Measured channels, in the order the edge reports them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Ph,
    Do,
    Tds,
    WaterTemp,
    AirTemp,
    Humidity,
}

impl Channel {
    pub const ALL: [Channel; 6] =
        [Channel::Ph, Channel::Do, Channel::Tds, Channel::WaterTemp, Channel::AirTemp, Channel::Humidity];

    /// Engineering-unit span used to size the noise band.
    pub fn full_scale(self) -> f64 {
        match self {
            Channel::Ph => 14.0,
            Channel::Do => DO_FULL_SCALE,
            Channel::Tds => TDS_FULL_SCALE,
            Channel::WaterTemp | Channel::AirTemp => 50.0,
            Channel::Humidity => 100.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Ph => "ph",
            Channel::Do => "do",
            Channel::Tds => "tds",
            Channel::WaterTemp => "water_temp",
            Channel::AirTemp => "air_temp",
            Channel::Humidity => "humidity",
        }
    }
}

/// Seeded, zero-mean, uniformly bounded measurement noise.
#[derive(Clone, Debug)]
pub struct SensorNoise {
    fraction: f64,
    rng: ChaCha8Rng,
}

impl SensorNoise {
    /// `fraction` is the half-width of the band as a fraction of full scale.
    pub fn new(fraction: f64, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { fraction, rng }
    }

    pub fn silent() -> Self {
        Self::new(0.0, 0, 0)
    }

    pub fn fraction(&self) -> f64 {
        self.fraction
    }

    fn sample(&mut self, channel: Channel) -> f64 {
        // Always draw so the stream position does not depend on `fraction`.
        let u: f64 = self.rng.gen_range(-1.0..=1.0);
        u * self.fraction * channel.full_scale()
    }
}

/// Raw probe outputs: analog voltages for pH/DO/TDS, digital values for the rest.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawReadings {
    pub ph_volts: f64,
    pub do_volts: f64,
    pub tds_volts: f64,
    pub water_temp: f64,
    pub air_temp: f64,
    pub humidity: f64,
}

/// Samples every probe attached to `tank`.
pub fn read_sensors(tank: &TankState, env: &Environment, noise: &mut SensorNoise) -> RawReadings {
    let ph = tank.ph + noise.sample(Channel::Ph);
    let dox = tank.dissolved_oxygen + noise.sample(Channel::Do);
    let tds = tank.tds + noise.sample(Channel::Tds);
    let water_temp = tank.water_temp + noise.sample(Channel::WaterTemp);
    let air_temp = env.air_temp + noise.sample(Channel::AirTemp);
    let humidity = (env.humidity + noise.sample(Channel::Humidity)).clamp(0.0, 100.0);
    RawReadings {
        ph_volts: ph_to_voltage(ph),
        do_volts: do_to_voltage(dox),
        tds_volts: tds_to_voltage(tds),
        water_temp,
        air_temp,
        humidity,
    }
}
