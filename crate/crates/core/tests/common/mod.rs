#![allow(dead_code)]

use std::sync::mpsc::{self, Receiver};

use cypha_core::actuation::{ActuatorCommand, ManualRequest};
use cypha_core::bus::{Broker, QoS, Session};
use cypha_core::controller::{Controller, ControllerConfig, ControllerEvent};
use cypha_core::datastore::LogRow;
use cypha_core::edge::SensorRecord;
use cypha_core::gateway::{Envelope, Gateway, GatewayNode, KeyTable};
use cypha_core::StageId;

pub const EPOCH: f64 = 1_672_531_200.0;

pub fn record(ts: f64, ph: f64, dissolved_oxygen: f64) -> SensorRecord {
    SensorRecord {
        ts: EPOCH + ts,
        stage: StageId::S2,
        ph,
        tds: 400.0,
        dissolved_oxygen,
        water_temp: 26.0,
        air_temp: 27.0,
        humidity: 60.0,
        wp: false,
        ap: false,
    }
}

/// Controller wired to a stage-side bus through the gateway, with a
/// scripted Stage-2 publisher and a probe on the actuating topic.
pub struct Rig {
    pub keys: KeyTable,
    pub stage_bus: Broker,
    pub controller_bus: Broker,
    pub gateway: GatewayNode,
    pub controller: Controller,
    pub edge: Session,
    pub probe: Session,
    pub hmi: Session,
    pub log: Receiver<LogRow>,
}

impl Rig {
    pub fn new(cfg: ControllerConfig) -> Self {
        let keys = KeyTable::derived(11);
        let stage_bus = Broker::default();
        let controller_bus = Broker::default();
        let gateway = GatewayNode::attach(Gateway::new(keys.clone()), &stage_bus, &controller_bus).unwrap();
        let (tx, log) = mpsc::sync_channel(1 << 16);
        let controller =
            Controller::new(cfg, controller_bus.connect("controller", 0).unwrap(), keys.clone(), tx, EPOCH).unwrap();
        let edge = stage_bus.connect("stage2-edge", 0).unwrap();
        let probe = stage_bus.connect("probe", 0).unwrap();
        probe.subscribe(&StageId::S2.actuating_topic(), QoS::AtLeastOnce).unwrap();
        let hmi = controller_bus.connect("hmi", 0).unwrap();
        Self { keys, stage_bus, controller_bus, gateway, controller, edge, probe, hmi, log }
    }

    /// Moves everything in flight and returns the controller's events.
    pub fn settle(&mut self, now: f64) -> Vec<ControllerEvent> {
        let mut events = Vec::new();
        for _ in 0..8 {
            let moved = self.gateway.pump();
            let e = self.controller.handle_messages(now);
            if moved == 0 && e.is_empty() {
                break;
            }
            events.extend(e);
        }
        self.gateway.pump();
        events
    }

    /// Publishes a sealed Stage-2 record at virtual time `now` and returns
    /// the command that reached the stage side, if any.
    pub fn send(&mut self, rec: &SensorRecord, now: f64) -> Option<ActuatorCommand> {
        let topic = StageId::S2.sensing_topic();
        let wire = Envelope::seal(&self.keys, &topic, &rec.to_json(), "stage2").unwrap().to_json();
        self.edge.publish(&topic, wire, QoS::AtMostOnce).unwrap();
        self.settle(now);
        self.last_command()
    }

    pub fn last_command(&mut self) -> Option<ActuatorCommand> {
        let mut last = None;
        while let Some(d) = self.probe.poll().unwrap() {
            let env = cypha_core::gateway::open(&self.keys, d.topic.as_str(), &d.payload).unwrap();
            last = Some(ActuatorCommand::from_json(&env.payload).unwrap());
        }
        last
    }

    pub fn manual(&mut self, req: &ManualRequest, now: f64) {
        let topic = StageId::S2.manual_topic();
        let wire = Envelope::seal(&self.keys, &topic, &req.to_json(), "hmi").unwrap().to_json();
        self.hmi.publish(&topic, wire, QoS::AtLeastOnce).unwrap();
        self.settle(now);
    }
}
