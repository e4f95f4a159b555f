use cypha_core::actuation::{ActuatorCommand, CommandSource, ManualRequest};
use cypha_core::bus::{Broker, QoS, Session};
use cypha_core::edge::{EdgeAgent, EdgeConfig, EdgeEvent, SensorFault, SensorRecord};
use cypha_core::gateway::{open, Envelope, KeyTable};
use cypha_core::plant::{Channel, SensorNoise, SimConfig, World};
use cypha_core::StageId;

fn setup(stage: StageId) -> (Broker, EdgeAgent, Session, World, KeyTable) {
    let keys = KeyTable::derived(3);
    let bus = Broker::default();
    let cfg = EdgeConfig { manual_expiry: 30.0, ..EdgeConfig::new(stage) };
    let edge = EdgeAgent::new(cfg, bus.connect("edge", 0).unwrap(), keys.clone(), SensorNoise::new(0.01, 1, 2)).unwrap();
    let sink = bus.connect("sink", 0).unwrap();
    sink.subscribe(&stage.sensing_topic(), QoS::AtMostOnce).unwrap();
    let world = World::with_default_tanks(SimConfig::default()).unwrap();
    (bus, edge, sink, world, keys)
}

fn received(sink: &mut Session, keys: &KeyTable) -> Vec<SensorRecord> {
    sink.drain()
        .into_iter()
        .map(|d| {
            let env = open(keys, d.topic.as_str(), &d.payload).unwrap();
            serde_json::from_slice(&env.payload).unwrap()
        })
        .collect()
}

fn command(keys: &KeyTable, wp: bool, ap: bool) -> Vec<u8> {
    let cmd = ActuatorCommand { ts: 0.0, wp, ap, source: CommandSource::Controller };
    Envelope::seal(keys, &StageId::S2.actuating_topic(), &cmd.to_json(), "controller").unwrap().to_json()
}

#[test]
fn samples_every_two_seconds() {
    let (_bus, mut edge, mut sink, mut world, keys) = setup(StageId::S2);
    for t in 1..=60 {
        world.step(1.0).unwrap();
        edge.sample(t as f64, &world);
    }
    let recs = received(&mut sink, &keys);
    assert_eq!(recs.len(), 30);
    for (i, r) in recs.iter().enumerate() {
        assert_eq!(r.ts, 2.0 * (i + 1) as f64);
        assert_eq!(r.stage, StageId::S2);
    }
}

#[test]
fn outage_backlog_is_flushed_in_order() {
    let (bus, mut edge, mut sink, world, keys) = setup(StageId::S4);
    for t in 1..=10 {
        edge.sample(t as f64, &world);
    }
    bus.set_online(false);
    for t in 11..=20 {
        let ev = edge.sample(t as f64, &world);
        assert!(!ev.iter().any(|e| matches!(e, EdgeEvent::Published { .. })));
    }
    assert_eq!(edge.buffered(), 5);
    bus.set_online(true);
    for t in 21..=24 {
        edge.sample(t as f64, &world);
    }
    let ts: Vec<f64> = received(&mut sink, &keys).iter().map(|r| r.ts).collect();
    let want: Vec<f64> = (1..=12).map(|i| 2.0 * i as f64).collect();
    assert_eq!(ts, want);
    assert_eq!(edge.stats().dropped, 0);
}

#[test]
fn full_buffer_drops_oldest() {
    let keys = KeyTable::derived(3);
    let bus = Broker::default();
    let cfg = EdgeConfig { buffer_capacity: 4, ..EdgeConfig::new(StageId::S1) };
    let mut edge = EdgeAgent::new(cfg, bus.connect("edge", 0).unwrap(), keys, SensorNoise::silent()).unwrap();
    let world = World::with_default_tanks(SimConfig::default()).unwrap();
    bus.set_online(false);
    let mut dropped = Vec::new();
    for t in 1..=20 {
        for e in edge.sample(t as f64, &world) {
            if let EdgeEvent::Dropped { ts } = e {
                dropped.push(ts);
            }
        }
    }
    assert_eq!(edge.buffered(), 4);
    assert_eq!(dropped, vec![2.0, 4.0, 6.0, 8.0, 10.0, 12.0]);
}

#[test]
fn stage_two_applies_commands_and_honours_the_latch() {
    let (bus, mut edge, _sink, mut world, keys) = setup(StageId::S2);
    let ctl = bus.connect("ctl", 0).unwrap();
    let topic = StageId::S2.actuating_topic();
    ctl.publish(&topic, command(&keys, true, false), QoS::AtLeastOnce).unwrap();
    edge.handle_messages(1.0, &mut world);
    assert_eq!(world.actuator_state(StageId::S2), (true, false));

    let req = ManualRequest { wp: Some(false), ..Default::default() };
    let manual = Envelope::seal(&keys, &StageId::S2.manual_topic(), &req.to_json(), "hmi").unwrap().to_json();
    ctl.publish(&StageId::S2.manual_topic(), manual, QoS::AtLeastOnce).unwrap();
    edge.handle_messages(2.0, &mut world);
    assert!(!world.actuator_state(StageId::S2).0);

    // Controller commands during the latch cannot override the pinned relay.
    ctl.publish(&topic, command(&keys, true, true), QoS::AtLeastOnce).unwrap();
    edge.handle_messages(10.0, &mut world);
    assert_eq!(world.actuator_state(StageId::S2), (false, true));

    // After expiry the last controller output comes back.
    let ev = edge.handle_messages(33.0, &mut world);
    assert!(ev.contains(&EdgeEvent::LatchReleased));
    assert_eq!(world.actuator_state(StageId::S2), (true, true));
}

#[test]
fn forged_and_unsealed_commands_are_ignored() {
    let (bus, mut edge, _sink, mut world, keys) = setup(StageId::S2);
    let ctl = bus.connect("ctl", 0).unwrap();
    let topic = StageId::S2.actuating_topic();
    let plain = ActuatorCommand { ts: 0.0, wp: true, ap: true, source: CommandSource::Controller };
    ctl.publish(&topic, plain.to_json(), QoS::AtLeastOnce).unwrap();
    let other = KeyTable::derived(4);
    ctl.publish(&topic, command(&other, true, true), QoS::AtLeastOnce).unwrap();
    let before = world.actuator_state(StageId::S2);
    edge.handle_messages(1.0, &mut world);
    assert_eq!(world.actuator_state(StageId::S2), before);
    assert_eq!(edge.stats().commands_rejected, 2);
    let _ = keys;
}

#[test]
fn other_stages_never_actuate() {
    let (bus, mut edge, _sink, mut world, keys) = setup(StageId::S3);
    let ctl = bus.connect("ctl", 0).unwrap();
    let cmd = ActuatorCommand { ts: 0.0, wp: true, ap: true, source: CommandSource::Controller };
    let topic = StageId::S3.actuating_topic();
    let wire = Envelope::seal(&keys, &topic, &cmd.to_json(), "controller").unwrap().to_json();
    ctl.publish(&topic, wire, QoS::AtLeastOnce).unwrap();
    let before = world.actuator_state(StageId::S3);
    assert!(edge.handle_messages(1.0, &mut world).is_empty());
    assert_eq!(world.actuator_state(StageId::S3), before);
}

#[test]
fn equal_seeds_give_equal_payloads() {
    let run = || {
        let (_bus, mut edge, mut sink, mut world, _keys) = setup(StageId::S2);
        edge.set_fault(Channel::Ph, Some(SensorFault::Drift { rate_per_hour: 0.5, since: 0.0 }));
        for t in 1..=40 {
            world.step(1.0).unwrap();
            edge.sample(t as f64, &world);
        }
        sink.drain().into_iter().map(|d| d.payload.to_vec()).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn stuck_sensor_holds_its_value() {
    let (_bus, mut edge, mut sink, mut world, keys) = setup(StageId::S2);
    edge.set_fault(Channel::Do, Some(SensorFault::Stuck { value: Some(1.25) }));
    for t in 1..=20 {
        world.step(1.0).unwrap();
        edge.sample(t as f64, &world);
    }
    let recs = received(&mut sink, &keys);
    assert!(recs.iter().all(|r| r.dissolved_oxygen == 1.25));
    assert!(edge.alert().led);
}
