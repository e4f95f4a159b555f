mod common;

use common::{record, Rig};
use cypha_core::actuation::{ManualRequest, Output};
use cypha_core::controller::{classify, fsm_step, ControllerConfig, FsmState, InputSymbol};
use cypha_core::Interval;
use proptest::prelude::*;

fn expected_next(symbol: InputSymbol) -> FsmState {
    match symbol {
        InputSymbol::A => FsmState::Q1,
        InputSymbol::B => FsmState::Q2,
        InputSymbol::C => FsmState::Q3,
        InputSymbol::D => FsmState::Q4,
    }
}

#[test]
fn transition_table_is_exhaustive() {
    let symbols = [InputSymbol::A, InputSymbol::B, InputSymbol::C, InputSymbol::D];
    let outputs = [(FsmState::Q1, "00"), (FsmState::Q2, "01"), (FsmState::Q3, "10"), (FsmState::Q4, "11")];
    let mut cases = 0;
    for s in FsmState::ALL {
        for sym in symbols {
            let (next, out) = fsm_step(s, sym);
            assert_eq!(next, expected_next(sym), "{s} x {sym:?}");
            assert_eq!(out, next.output());
            cases += 1;
        }
    }
    assert_eq!(cases, 16);
    for (q, bits) in outputs {
        assert_eq!(q.output().to_string(), bits);
    }
}

#[test]
fn symbols_follow_membership() {
    let cfg = ControllerConfig::default();
    assert_eq!(classify(7.0, 4.0, &cfg), InputSymbol::A);
    assert_eq!(classify(7.0, 2.0, &cfg), InputSymbol::B);
    assert_eq!(classify(6.0, 4.0, &cfg), InputSymbol::C);
    assert_eq!(classify(9.0, 6.0, &cfg), InputSymbol::D);
    // Bounds are inclusive.
    assert_eq!(classify(6.5, 3.5, &cfg), InputSymbol::A);
    assert_eq!(classify(8.5, 5.0, &cfg), InputSymbol::A);
}

#[test]
fn thresholds_come_from_config() {
    let cfg = ControllerConfig { do_permissible: Interval::new(1.0, 2.5).unwrap(), ..ControllerConfig::default() };
    assert_eq!(classify(7.0, 2.0, &cfg), InputSymbol::A);
    let toml = "ph_permissible = [6.0, 7.0]\nlog_interval = 5.0\n";
    let cfg = ControllerConfig::from_toml_str(toml).unwrap();
    assert_eq!(classify(6.2, 4.0, &cfg), InputSymbol::A);
    assert_eq!(cfg.log_interval_ms(), 5000);
    assert!(ControllerConfig::from_toml_str("ph_permissible = [7.0, 6.0]\n").is_err());
    assert!(ControllerConfig::from_toml_str("log_interval = 0\n").is_err());
    assert!(ControllerConfig::from_toml_str("unknown = 1\n").is_err());
}

proptest! {
    #[test]
    fn output_depends_only_on_state(s in 0usize..4, sym in 0usize..4, ph in 0.0f64..14.0, d in 0.0f64..20.0) {
        let state = FsmState::ALL[s];
        let symbol = [InputSymbol::A, InputSymbol::B, InputSymbol::C, InputSymbol::D][sym];
        let (next, out) = fsm_step(state, symbol);
        prop_assert_eq!(out, next.output());
        let cfg = ControllerConfig::default();
        let sym = classify(ph, d, &cfg);
        let (_, out) = fsm_step(state, sym);
        let ph_in = cfg.ph_permissible.contains(ph);
        let do_in = cfg.do_permissible.contains(d);
        // Bad pH drives the water pump, low DO drives the aerator.
        prop_assert_eq!(out, Output::new(!ph_in, !do_in));
    }
}

#[test]
fn commands_follow_records_through_the_bus() {
    let mut rig = Rig::new(ControllerConfig::default());
    let cmd = rig.send(&record(2.0, 6.0, 4.0), 2.0).unwrap();
    assert_eq!((cmd.wp, cmd.ap), (true, false));
    let cmd = rig.send(&record(4.0, 7.0, 2.0), 4.0).unwrap();
    assert_eq!((cmd.wp, cmd.ap), (false, true));
    let cmd = rig.send(&record(6.0, 7.0, 4.0), 6.0).unwrap();
    assert_eq!((cmd.wp, cmd.ap), (false, false));
    assert_eq!(rig.controller.state(), FsmState::Q1);
    assert_eq!(rig.controller.stats().records, 3);
}

#[test]
fn rejects_unsealed_and_malformed_records() {
    let mut rig = Rig::new(ControllerConfig::default());
    let topic = cypha_core::StageId::S2.sensing_topic();
    rig.edge.publish(&topic, record(2.0, 6.0, 4.0).to_json(), cypha_core::bus::QoS::AtMostOnce).unwrap();
    rig.settle(2.0);
    assert_eq!(rig.last_command(), None);
    let mut r = record(4.0, 6.0, 4.0);
    r.ph = 15.0;
    assert_eq!(rig.send(&r, 4.0), None);
    assert_eq!(rig.controller.stats().out_of_range, 1);
    assert_eq!(rig.controller.state(), FsmState::Q1);
}

#[test]
fn manual_latch_masks_the_controller_until_expiry() {
    let cfg = ControllerConfig { manual_expiry: 60.0, ..ControllerConfig::default() };
    let mut rig = Rig::new(cfg);
    rig.manual(&ManualRequest { ap: Some(true), ..Default::default() }, 10.0);
    for t in (12..70).step_by(2) {
        let cmd = rig.send(&record(t as f64, 6.0, 4.0), t as f64).unwrap();
        // wp follows the controller, ap is pinned by the operator.
        assert_eq!((cmd.wp, cmd.ap), (true, true), "t={t}");
    }
    let cmd = rig.send(&record(72.0, 6.0, 4.0), 72.0).unwrap();
    assert_eq!((cmd.wp, cmd.ap), (true, false));
}

#[test]
fn manual_release_returns_control() {
    let mut rig = Rig::new(ControllerConfig::default());
    rig.manual(&ManualRequest { wp: Some(false), ap: Some(false), ..Default::default() }, 0.0);
    let cmd = rig.send(&record(2.0, 6.0, 2.0), 2.0).unwrap();
    assert_eq!((cmd.wp, cmd.ap), (false, false));
    rig.manual(&ManualRequest { release: true, ..Default::default() }, 3.0);
    let cmd = rig.send(&record(4.0, 6.0, 2.0), 4.0).unwrap();
    assert_eq!((cmd.wp, cmd.ap), (true, true));
}

#[test]
fn logs_are_decimated_to_the_interval() {
    let mut rig = Rig::new(ControllerConfig::default());
    for t in (2..=864).step_by(2) {
        rig.send(&record(t as f64, 7.0, 4.0), t as f64);
    }
    let rows: Vec<_> = rig.log.try_iter().collect();
    assert_eq!(rows.len(), 100);
    assert!(rows.windows(2).all(|w| w[0].timestamp < w[1].timestamp));
}
