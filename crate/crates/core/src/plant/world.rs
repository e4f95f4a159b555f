use serde::Serialize;

use super::ops::{move_water, nitrify};
use super::{
    CirculationScheduler, Environment, PumpSpec, Route, SimConfig, SimError, TankState, WaterQuality,
};
use crate::StageId;

/// Air flow at which `k_aeration` is specified, L/min.
const RATED_AIR_LPM: f64 = 3.0;

/// Something noteworthy that happened during a step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum SimEvent {
    /// Destination capacity cut a transfer short. Water stays in the source.
    Overflow { route: Route, requested: f64, moved: f64 },
    /// A running pump had no water to move.
    DryRun { route: Route },
    CirculationStarted,
    CirculationFinished,
    Intake { requested: f64, accepted: f64 },
    Reject { stage: StageId, requested: f64, removed: f64 },
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepReport {
    pub events: Vec<SimEvent>,
    /// Litres moved per route, indexed by [`Route::index`].
    pub moved: [f64; 6],
}

/// The whole physical loop: five tanks, their pumps and the environment.
#[derive(Clone, Debug)]
pub struct World {
    cfg: SimConfig,
    tanks: [TankState; 5],
    env: Environment,
    water_pumps: [PumpSpec; 6],
    timed: [f64; 6],
    aerators: [PumpSpec; 5],
    scheduler: CirculationScheduler,
    time: f64,
    external_in: f64,
    external_out: f64,
    initial_total: f64,
}

fn pair_mut(tanks: &mut [TankState; 5], a: usize, b: usize) -> (&mut TankState, &mut TankState) {
    assert_ne!(a, b);
    if a < b {
        let (lo, hi) = tanks.split_at_mut(b);
        (&mut lo[a], &mut hi[0])
    } else {
        let (lo, hi) = tanks.split_at_mut(a);
        (&mut hi[0], &mut lo[b])
    }
}

impl World {
    /// Default starting condition for each tank.
    pub fn default_tanks(cfg: &SimConfig) -> [TankState; 5] {
        let q = |ph, dox, tds, nh3| WaterQuality {
            ph,
            dissolved_oxygen: dox,
            tds,
            ammonia: nh3,
            water_temp: 26.0,
        };
        let cap = |s| TankState::fixed_capacity(s, cfg.s1_capacity);
        [
            TankState::new(StageId::S1, cap(StageId::S1), 0.8 * cfg.s1_capacity, q(7.0, 6.0, 250.0, 0.2)),
            TankState::new(StageId::S2, cap(StageId::S2), 70.0, q(7.2, 4.0, 400.0, 1.0)),
            TankState::new(StageId::S3, cap(StageId::S3), 40.0, q(7.0, 5.0, 380.0, 2.0)),
            TankState::new(StageId::S4, cap(StageId::S4), 40.0, q(7.0, 5.5, 350.0, 0.8)),
            TankState::new(StageId::S5, cap(StageId::S5), 10.0, q(7.0, 6.0, 300.0, 0.3)),
        ]
    }

    pub fn new(cfg: SimConfig, tanks: [TankState; 5]) -> Result<Self, SimError> {
        cfg.validate()?;
        for (i, t) in tanks.iter().enumerate() {
            if t.stage != StageId::ALL[i] {
                return Err(SimError::Config(format!("tank {i} is {}, expected {}", t.stage, StageId::ALL[i])));
            }
            let cap = TankState::fixed_capacity(t.stage, cfg.s1_capacity);
            if t.capacity != cap {
                return Err(SimError::Config(format!("{} capacity must be {cap} L, got {}", t.stage, t.capacity)));
            }
            t.check(&cfg.do_saturation)?;
        }
        let p = &cfg.pumps;
        let water_pumps = Route::ORDER.map(|r| match r {
            Route::S4ToS5 => PumpSpec::water(p.s5_fill_rate_lph),
            Route::S5ToS1 => PumpSpec::water(p.s5_drain_rate_lph).with_on(p.s5_supply_enabled),
            _ => PumpSpec::water(p.water_rate_lph),
        });
        let aerators = StageId::ALL
            .map(|s| PumpSpec::aeration(p.aeration_rate_lpm).with_on(p.always_aerated.contains(&s)));
        let initial_total = tanks.iter().map(|t| t.volume).sum();
        let mut world = Self {
            env: Environment { air_temp: 0.0, humidity: 0.0, uv_light: cfg.environment.uv_light },
            cfg,
            tanks,
            water_pumps,
            timed: [0.0; 6],
            aerators,
            scheduler: CirculationScheduler::default(),
            time: 0.0,
            external_in: 0.0,
            external_out: 0.0,
            initial_total,
        };
        world.update_environment();
        Ok(world)
    }

    pub fn with_default_tanks(cfg: SimConfig) -> Result<Self, SimError> {
        let tanks = Self::default_tanks(&cfg);
        Self::new(cfg, tanks)
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn tank(&self, stage: StageId) -> &TankState {
        &self.tanks[stage.index()]
    }

    pub fn tanks(&self) -> &[TankState; 5] {
        &self.tanks
    }

    pub fn environment(&self) -> &Environment {
        &self.env
    }

    pub fn scheduler(&self) -> &CirculationScheduler {
        &self.scheduler
    }

    pub fn scheduler_mut(&mut self) -> &mut CirculationScheduler {
        &mut self.scheduler
    }

    pub fn total_volume(&self) -> f64 {
        self.tanks.iter().map(|t| t.volume).sum()
    }

    /// Total volume implied by the start state and explicit intake/reject.
    pub fn expected_total(&self) -> f64 {
        self.initial_total + self.external_in - self.external_out
    }

    /// Water routes switched by a stage's water-pump relay.
    ///
    /// Stage-2's pump exchanges fish-tank water: it drains S2 into S3 while
    /// the Stage-1 supply pump refills S2 by the same amount.
    pub fn stage_water_routes(stage: StageId) -> &'static [Route] {
        match stage {
            StageId::S1 => &[Route::S1ToS5],
            StageId::S2 => &[Route::S2ToS3, Route::S1ToS2],
            StageId::S3 => &[Route::S3ToS4],
            StageId::S4 => &[Route::S4ToS5],
            StageId::S5 => &[Route::S5ToS1],
        }
    }

    pub fn set_water_pump(&mut self, route: Route, on: bool) {
        self.water_pumps[route.index()].on = on;
    }

    pub fn set_aerator(&mut self, stage: StageId, on: bool) {
        self.aerators[stage.index()].on = on || self.cfg.pumps.always_aerated.contains(&stage);
    }

    /// Applies a stage's water-pump / aeration-pump relay pair.
    pub fn set_stage_actuators(&mut self, stage: StageId, wp: bool, ap: bool) {
        for &r in Self::stage_water_routes(stage) {
            self.set_water_pump(r, wp);
        }
        self.set_aerator(stage, ap);
    }

    pub fn set_water_pump_failed(&mut self, route: Route, failed: bool) {
        self.water_pumps[route.index()].failed = failed;
    }

    pub fn set_aerator_failed(&mut self, stage: StageId, failed: bool) {
        self.aerators[stage.index()].failed = failed;
    }

    /// Runs `route` for `seconds` regardless of its relay state.
    pub fn run_route_for(&mut self, route: Route, seconds: f64) {
        let slot = &mut self.timed[route.index()];
        *slot = slot.max(seconds);
    }

    fn route_running(&self, route: Route) -> bool {
        let pump = &self.water_pumps[route.index()];
        !pump.failed
            && (pump.on || self.timed[route.index()] > 0.0 || self.scheduler.active_routes().contains(&route))
    }

    /// Reported relay state `(wp, ap)` of a stage: the water pump counts as
    /// on if any of its routes is running.
    pub fn actuator_state(&self, stage: StageId) -> (bool, bool) {
        let wp = Self::stage_water_routes(stage).iter().any(|&r| self.route_running(r));
        (wp, self.aerators[stage.index()].is_running())
    }

    /// Adds fresh water to S1, clamped to free space. Returns litres accepted.
    pub fn intake(&mut self, liters: f64) -> SimEvent {
        let fresh = &self.cfg.fresh_water;
        let q = WaterQuality {
            ph: fresh.ph,
            dissolved_oxygen: fresh.dissolved_oxygen,
            tds: fresh.tds,
            ammonia: fresh.ammonia,
            water_temp: fresh.water_temp,
        };
        let s1 = &mut self.tanks[StageId::S1.index()];
        let accepted = liters.max(0.0).min(s1.free_space());
        if accepted > 0.0 {
            let mixed = s1.quality().mix(s1.volume, &q, accepted);
            s1.set_quality(mixed);
            s1.volume += accepted;
            self.external_in += accepted;
        }
        SimEvent::Intake { requested: liters, accepted }
    }

    /// Discards water from a stage out of the loop. Returns litres removed.
    pub fn reject(&mut self, stage: StageId, liters: f64) -> SimEvent {
        let t = &mut self.tanks[stage.index()];
        let removed = liters.max(0.0).min(t.volume);
        t.volume = if removed >= t.volume { 0.0 } else { t.volume - removed };
        self.external_out += removed;
        SimEvent::Reject { stage, requested: liters, removed }
    }

    fn update_environment(&mut self) {
        let e = &self.cfg.environment;
        let phase = std::f64::consts::TAU * self.time / 86_400.0;
        self.env.air_temp = e.air_temp_mean + e.air_temp_amplitude * phase.sin();
        self.env.humidity = (e.humidity_mean - e.humidity_amplitude * phase.sin()).clamp(0.0, 100.0);
        self.env.uv_light = e.uv_light;
    }

    /// Advances the loop by `dt` seconds.
    ///
    /// Order: pump transfers, aeration, DO consumption, nitrification,
    /// TDS/pH drift, then temperature and observable-state clamps.
    pub fn step(&mut self, dt: f64) -> Result<StepReport, SimError> {
        if !(dt > 0.0 && dt <= self.cfg.dt) {
            return Err(SimError::InvalidStep { dt, max: self.cfg.dt });
        }
        let mut report = StepReport::default();
        let r = self.cfg.rates.clone();

        // (1) transfers
        if self.scheduler.begin_step() {
            report.events.push(SimEvent::CirculationStarted);
        }
        for route in Route::ORDER {
            if !self.route_running(route) {
                continue;
            }
            let mut requested = self.water_pumps[route.index()].liters_per_second() * dt;
            let commanded = self.water_pumps[route.index()].on || self.timed[route.index()] > 0.0;
            if !commanded {
                if let Some(limit) = self.scheduler.limit(route, &self.tanks) {
                    requested = requested.min(limit);
                }
            } else if route == Route::S1ToS2 && self.water_pumps[Route::S2ToS3.index()].on {
                // Exchange keeps the fish-tank level: refill only what was drained.
                requested = requested.min(report.moved[Route::S2ToS3.index()]);
            }
            let (src, dst) = pair_mut(&mut self.tanks, route.src().index(), route.dst().index());
            let out = move_water(src, dst, requested);
            report.moved[route.index()] = out.moved;
            if out.dry_run {
                report.events.push(SimEvent::DryRun { route });
            } else if out.overflow {
                report.events.push(SimEvent::Overflow { route, requested, moved: out.moved });
            }
        }
        for t in &mut self.timed {
            *t = (*t - dt).max(0.0);
        }
        if self.scheduler.end_step(&self.tanks, dt) {
            report.events.push(SimEvent::CirculationFinished);
        }

        // (2) aeration
        for (tank, pump) in self.tanks.iter_mut().zip(&self.aerators) {
            if !pump.is_running() || tank.volume <= 0.0 {
                continue;
            }
            let sat = self.cfg.do_saturation.at(tank.water_temp);
            if tank.dissolved_oxygen < sat {
                let k = r.k_aeration * pump.rate() / RATED_AIR_LPM;
                tank.dissolved_oxygen = sat - (sat - tank.dissolved_oxygen) * (-k * dt).exp();
            }
        }

        // (3) fish respiration
        let s2 = &mut self.tanks[StageId::S2.index()];
        if s2.volume > 0.0 {
            s2.dissolved_oxygen = (s2.dissolved_oxygen - r.k_do_consumption * dt).max(0.0);
        }

        // (4) nitrification
        for stage in [StageId::S3, StageId::S4] {
            nitrify(&mut self.tanks[stage.index()], r.k_nitrification, dt)?;
        }

        // (5) drift
        let s2 = &mut self.tanks[StageId::S2.index()];
        if s2.volume > 0.0 {
            s2.tds += r.k_tds_accretion * dt;
            s2.ph = (s2.ph - r.k_ph_drift * dt).clamp(0.0, 14.0);
            s2.ammonia += r.k_ammonia_excretion * dt;
        }
        let s1 = &mut self.tanks[StageId::S1.index()];
        if s1.volume > 0.0 {
            let relax = |x: f64, target: f64, k: f64| target + (x - target) * (-k * dt).exp();
            s1.ph = relax(s1.ph, r.ph_buffer_target, r.k_ph_buffer);
            if s1.tds > r.tds_baseline {
                s1.tds = relax(s1.tds, r.tds_baseline, r.k_plant_uptake);
            }
            s1.ammonia *= (-r.k_plant_uptake * dt).exp();
        }

        // (6) observable state
        self.time += dt;
        self.update_environment();
        let air = self.env.air_temp;
        for tank in &mut self.tanks {
            tank.water_temp = air + (tank.water_temp - air) * (-r.k_thermal * dt).exp();
            let sat = self.cfg.do_saturation.at(tank.water_temp);
            tank.dissolved_oxygen = tank.dissolved_oxygen.clamp(0.0, sat);
            tank.ph = tank.ph.clamp(0.0, 14.0);
            tank.tds = tank.tds.max(0.0);
            tank.ammonia = tank.ammonia.max(0.0);
        }
        Ok(report)
    }

    /// Per-tank invariants plus volume conservation against explicit
    /// intake/reject.
    pub fn check_invariants(&self) -> Result<(), SimError> {
        for t in &self.tanks {
            t.check(&self.cfg.do_saturation)?;
        }
        let drift = (self.total_volume() - self.expected_total()).abs();
        if drift > 1e-6 {
            return Err(SimError::Invariant(format!(
                "volume drift {drift} L (total {} vs expected {})",
                self.total_volume(),
                self.expected_total()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet_cfg() -> SimConfig {
        let mut cfg = SimConfig::default();
        cfg.pumps.s5_supply_enabled = false;
        cfg.pumps.always_aerated.clear();
        cfg
    }

    #[test]
    fn all_off_do_drops_by_consumption() {
        let cfg = quiet_cfg();
        let k = cfg.rates.k_do_consumption;
        let mut tanks = World::default_tanks(&cfg);
        tanks[1].dissolved_oxygen = 4.0;
        let mut w = World::new(cfg, tanks).unwrap();
        w.step(1.0).unwrap();
        assert!((w.tank(StageId::S2).dissolved_oxygen - (4.0 - k)).abs() < 1e-12);
    }

    #[test]
    fn aeration_at_saturation_is_fixed_point() {
        let mut cfg = quiet_cfg();
        cfg.rates.k_do_consumption = 0.0;
        cfg.rates.k_thermal = 0.0;
        cfg.environment.air_temp_amplitude = 0.0;
        cfg.environment.air_temp_mean = 26.0;
        let sat = cfg.do_saturation.at(26.0);
        let mut tanks = World::default_tanks(&cfg);
        tanks[1].dissolved_oxygen = sat;
        let mut w = World::new(cfg, tanks).unwrap();
        w.set_aerator(StageId::S2, true);
        w.step(1.0).unwrap();
        assert_eq!(w.tank(StageId::S2).dissolved_oxygen, sat);
    }

    #[test]
    fn conserves_volume_without_external_events() {
        let cfg = SimConfig::default();
        let mut w = World::with_default_tanks(cfg).unwrap();
        let start = w.total_volume();
        w.set_stage_actuators(StageId::S2, true, true);
        w.scheduler_mut().request_cycle();
        w.run_route_for(Route::S1ToS5, 120.0);
        for _ in 0..3600 {
            w.step(1.0).unwrap();
        }
        assert!((w.total_volume() - start).abs() < 1e-9);
        w.check_invariants().unwrap();
    }

    #[test]
    fn rejects_oversized_step() {
        let mut w = World::with_default_tanks(SimConfig::default()).unwrap();
        assert!(matches!(w.step(1.5), Err(SimError::InvalidStep { .. })));
        assert!(w.step(0.0).is_err());
    }

    #[test]
    fn overflow_is_reported_not_lost() {
        let mut w = World::with_default_tanks(quiet_cfg()).unwrap();
        w.set_stage_actuators(StageId::S2, true, false);
        let start = w.total_volume();
        let mut overflowed = false;
        for _ in 0..600 {
            let rep = w.step(1.0).unwrap();
            overflowed |= rep.events.iter().any(|e| matches!(e, SimEvent::Overflow { .. }));
        }
        assert!(overflowed);
        assert!((w.total_volume() - start).abs() < 1e-9);
        assert!(w.tank(StageId::S3).volume <= 80.0 + 1e-9);
    }

    #[test]
    fn circulation_cycle_completes() {
        let mut w = World::with_default_tanks(quiet_cfg()).unwrap();
        w.scheduler_mut().request_cycle();
        let mut started = false;
        let mut finished = false;
        for _ in 0..2000 {
            let rep = w.step(1.0).unwrap();
            started |= rep.events.contains(&SimEvent::CirculationStarted);
            finished |= rep.events.contains(&SimEvent::CirculationFinished);
        }
        assert!(started && finished);
        assert_eq!(w.scheduler().completed(), 1);
        // S5 was topped up by the first link.
        assert!(w.tank(StageId::S5).volume > 19.9);
        // No scheduler-driven link should have hit a capacity clamp.
        w.check_invariants().unwrap();
    }

    #[test]
    fn intake_and_reject_are_accounted() {
        let mut w = World::with_default_tanks(quiet_cfg()).unwrap();
        assert_eq!(w.intake(50.0), SimEvent::Intake { requested: 50.0, accepted: 20.0 });
        w.reject(StageId::S2, 10.0);
        w.check_invariants().unwrap();
        assert!((w.expected_total() - (240.0 + 20.0 - 10.0)).abs() < 1e-9);
    }

    #[test]
    fn failed_pump_stays_off() {
        let mut w = World::with_default_tanks(quiet_cfg()).unwrap();
        w.set_water_pump_failed(Route::S2ToS3, true);
        w.set_stage_actuators(StageId::S2, true, false);
        let before = w.tank(StageId::S3).volume;
        w.step(1.0).unwrap();
        assert_eq!(w.tank(StageId::S3).volume, before);
        assert!(w.actuator_state(StageId::S2).0, "the refill half still runs");
    }

    #[test]
    fn stage_two_exchange_keeps_level() {
        let mut w = World::with_default_tanks(quiet_cfg()).unwrap();
        let s2 = w.tank(StageId::S2).volume;
        let s1 = w.tank(StageId::S1).volume;
        w.set_stage_actuators(StageId::S2, true, false);
        for _ in 0..600 {
            w.step(1.0).unwrap();
        }
        assert!((w.tank(StageId::S2).volume - s2).abs() < 1e-9);
        // S3 filled to capacity, then the exchange stalls.
        assert!((w.tank(StageId::S3).volume - 80.0).abs() < 1e-9);
        assert!((s1 - w.tank(StageId::S1).volume - 40.0).abs() < 1e-9);
    }
}
