use cypha_core::plant::{Route, SimConfig, World};
use cypha_core::StageId;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_schedule(seed: u64, steps: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = World::with_default_tanks(SimConfig::default()).unwrap();
    let start = w.total_volume();
    for _ in 0..steps {
        match rng.gen_range(0..10) {
            0 => w.set_water_pump(Route::ORDER[rng.gen_range(0..6)], rng.gen()),
            1 => w.set_aerator(StageId::ALL[rng.gen_range(0..5)], rng.gen()),
            2 => w.run_route_for(Route::ORDER[rng.gen_range(0..6)], rng.gen_range(0.0..300.0)),
            3 => w.scheduler_mut().request_cycle(),
            4 => w.set_water_pump_failed(Route::ORDER[rng.gen_range(0..6)], rng.gen_bool(0.2)),
            _ => {}
        }
        let dt = rng.gen_range(0.01..=1.0);
        w.step(dt).unwrap();
        for t in w.tanks() {
            assert!(t.volume >= 0.0 && t.volume <= t.capacity + 1e-9, "{t:?}");
        }
    }
    w.check_invariants().unwrap();
    (w.total_volume() - start).abs()
}

#[test]
fn random_pump_schedules_conserve_volume() {
    let mut worst = 0.0f64;
    for seed in 0..10_000 {
        worst = worst.max(random_schedule(seed, 200));
    }
    assert!(worst < 1e-9, "worst drift {worst}");
}

fn s5_fill_and_drain() -> (f64, f64) {
    let mut cfg = SimConfig::default();
    cfg.pumps.always_aerated.clear();
    let mut tanks = World::default_tanks(&cfg);
    tanks[StageId::S5.index()].volume = 0.0;
    tanks[StageId::S4.index()].volume = 60.0;
    let mut w = World::new(cfg, tanks).unwrap();
    w.set_water_pump(Route::S5ToS1, false);
    w.set_water_pump(Route::S4ToS5, true);
    let mut fill = 0.0;
    while w.tank(StageId::S5).volume < 20.0 - 1e-9 {
        w.step(1.0).unwrap();
        fill += 1.0;
        assert!(fill < 1000.0);
    }
    w.set_water_pump(Route::S4ToS5, false);
    w.set_water_pump(Route::S5ToS1, true);
    let mut drain = 0.0;
    while w.tank(StageId::S5).volume > 1e-9 {
        w.step(1.0).unwrap();
        drain += 1.0;
        assert!(drain < 20_000.0);
    }
    (fill, drain)
}

#[test]
fn sump_fill_and_drain_times() {
    let (fill, drain) = s5_fill_and_drain();
    assert!((fill - 120.0).abs() <= 6.0, "fill {fill}");
    assert!((drain - 7200.0).abs() <= 360.0, "drain {drain}");
}

#[test]
fn aeration_recovers_low_oxygen() {
    let cfg = SimConfig::default();
    let mut tanks = World::default_tanks(&cfg);
    tanks[StageId::S2.index()].dissolved_oxygen = 1.0;
    let mut w = World::new(cfg, tanks).unwrap();
    w.set_aerator(StageId::S2, true);
    let mut t = 0;
    while w.tank(StageId::S2).dissolved_oxygen < 3.5 {
        w.step(1.0).unwrap();
        t += 1;
        assert!(t <= 7200, "DO {} after 2 h", w.tank(StageId::S2).dissolved_oxygen);
    }
}

#[test]
fn fish_tank_without_air_loses_oxygen() {
    let mut cfg = SimConfig::default();
    cfg.pumps.always_aerated.clear();
    let mut w = World::with_default_tanks(cfg).unwrap();
    let before = w.tank(StageId::S2).dissolved_oxygen;
    for _ in 0..600 {
        w.step(1.0).unwrap();
    }
    assert!(w.tank(StageId::S2).dissolved_oxygen < before);
}

#[test]
fn equal_seeds_give_equal_trajectories() {
    let run = || {
        let mut w = World::with_default_tanks(SimConfig { rng_seed: 9, ..SimConfig::default() }).unwrap();
        w.scheduler_mut().request_cycle();
        for _ in 0..3600 {
            w.step(1.0).unwrap();
        }
        format!("{:?}", w.tanks())
    };
    assert_eq!(run(), run());
}

proptest! {
    #[test]
    fn intake_and_reject_keep_the_books(intake in 0.0f64..100.0, reject in 0.0f64..100.0, stage in 0usize..5) {
        let mut w = World::with_default_tanks(SimConfig::default()).unwrap();
        w.intake(intake);
        w.reject(StageId::ALL[stage], reject);
        for _ in 0..60 {
            w.step(1.0).unwrap();
        }
        prop_assert!(w.check_invariants().is_ok());
        prop_assert!((w.total_volume() - w.expected_total()).abs() < 1e-9);
    }

    #[test]
    fn quality_stays_physical(do0 in 0.0f64..8.0, ph0 in 4.0f64..10.0, steps in 1usize..2000) {
        let cfg = SimConfig::default();
        let mut tanks = World::default_tanks(&cfg);
        tanks[StageId::S2.index()].dissolved_oxygen = do0;
        tanks[StageId::S2.index()].ph = ph0;
        let mut w = World::new(cfg, tanks).unwrap();
        w.set_stage_actuators(StageId::S2, true, true);
        for _ in 0..steps {
            w.step(1.0).unwrap();
        }
        prop_assert!(w.check_invariants().is_ok());
    }
}
