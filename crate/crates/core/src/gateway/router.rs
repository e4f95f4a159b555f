use std::sync::atomic::{AtomicU64, Ordering};

use log::warn;

use super::envelope::{open, Envelope, IntegrityError};
use super::keys::KeyTable;
use crate::bus::{BusError, QoS, Session};
use crate::StageId;

/// Which bus a message arrived on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Stage,
    Controller,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Stage => Side::Controller,
            Side::Controller => Side::Stage,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RouteError {
    #[error(transparent)]
    Integrity(#[from] IntegrityError),
    #[error("no route for `{0}`")]
    Unroutable(String),
    #[error("key `{key_id}` may not publish on `{topic}`")]
    Unauthorized { key_id: String, topic: String },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GatewayStats {
    pub to_controller: u64,
    pub to_stage: u64,
    pub bad_tag: u64,
    pub unknown_key: u64,
    pub malformed: u64,
    pub unroutable: u64,
    pub unauthorized: u64,
}

impl GatewayStats {
    pub fn rejected(&self) -> u64 {
        self.bad_tag + self.unknown_key + self.malformed + self.unroutable + self.unauthorized
    }
}

#[derive(Default)]
struct Counters {
    to_controller: AtomicU64,
    to_stage: AtomicU64,
    bad_tag: AtomicU64,
    unknown_key: AtomicU64,
    malformed: AtomicU64,
    unroutable: AtomicU64,
    unauthorized: AtomicU64,
}

/// A verified message and where it goes. `bytes` is the envelope exactly as received.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Routed {
    pub to: Side,
    pub topic: String,
    pub bytes: Vec<u8>,
    pub envelope: Envelope,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    Sensing,
    Actuating,
    Manual,
}

fn classify_topic(topic: &str) -> Option<(StageId, Kind)> {
    let canon = crate::bus::canonicalize(topic);
    let mut parts = canon.split('/');
    if parts.next()? != "cypha" {
        return None;
    }
    let stage = parts.next()?.strip_prefix("stage")?.parse::<u8>().ok()?;
    let stage = StageId::from_number(stage)?;
    let kind = match parts.next()? {
        "sensing" => Kind::Sensing,
        "actuating" => Kind::Actuating,
        "manual" => Kind::Manual,
        _ => return None,
    };
    parts.next().is_none().then_some((stage, kind))
}

/// Integrity check and direction routing. Stateless apart from counters.
pub struct Gateway {
    keys: KeyTable,
    counters: Counters,
}

impl Gateway {
    pub fn new(keys: KeyTable) -> Self {
        Self { keys, counters: Counters::default() }
    }

    pub fn keys(&self) -> &KeyTable {
        &self.keys
    }

    /// Verifies an envelope received on `topic` from `from` and decides its
    /// destination. Sensing flows stage → controller and must carry the
    /// stage's own key; actuating and manual flow controller → stage.
    pub fn route(&self, from: Side, topic: &str, bytes: &[u8]) -> Result<Routed, RouteError> {
        let result = self.route_inner(from, topic, bytes);
        let c = &self.counters;
        let counter = match &result {
            Ok(r) if r.to == Side::Controller => &c.to_controller,
            Ok(_) => &c.to_stage,
            Err(RouteError::Integrity(IntegrityError::BadTag)) => &c.bad_tag,
            Err(RouteError::Integrity(IntegrityError::UnknownKey(_))) => &c.unknown_key,
            Err(RouteError::Integrity(IntegrityError::Malformed(_))) => &c.malformed,
            Err(RouteError::Unroutable(_)) => &c.unroutable,
            Err(RouteError::Unauthorized { .. }) => &c.unauthorized,
        };
        counter.fetch_add(1, Ordering::Relaxed);
        if let Err(e) = &result {
            warn!("gateway dropped message on `{topic}`: {e}");
        }
        result
    }

    fn route_inner(&self, from: Side, topic: &str, bytes: &[u8]) -> Result<Routed, RouteError> {
        let Some((stage, kind)) = classify_topic(topic) else {
            return Err(RouteError::Unroutable(topic.to_owned()));
        };
        let expected_from = match kind {
            Kind::Sensing => Side::Stage,
            Kind::Actuating | Kind::Manual => Side::Controller,
        };
        if from != expected_from {
            return Err(RouteError::Unroutable(topic.to_owned()));
        }
        let envelope = open(&self.keys, topic, bytes)?;
        let allowed = match kind {
            Kind::Sensing => envelope.key_id == stage.key_id(),
            Kind::Actuating | Kind::Manual => envelope.key_id == "controller" || envelope.key_id == "hmi",
        };
        if !allowed {
            return Err(RouteError::Unauthorized { key_id: envelope.key_id, topic: topic.to_owned() });
        }
        Ok(Routed { to: from.other(), topic: crate::bus::canonicalize(topic).into_owned(), bytes: bytes.to_vec(), envelope })
    }

    pub fn stats(&self) -> GatewayStats {
        let c = &self.counters;
        let get = |a: &AtomicU64| a.load(Ordering::Relaxed);
        GatewayStats {
            to_controller: get(&c.to_controller),
            to_stage: get(&c.to_stage),
            bad_tag: get(&c.bad_tag),
            unknown_key: get(&c.unknown_key),
            malformed: get(&c.malformed),
            unroutable: get(&c.unroutable),
            unauthorized: get(&c.unauthorized),
        }
    }
}

/// A gateway attached to a stage-side and a controller-side bus.
pub struct GatewayNode {
    gateway: Gateway,
    stage: Session,
    controller: Session,
}

pub const GATEWAY_CLIENT_ID: &str = "cypha-gateway";

impl GatewayNode {
    pub fn attach(gateway: Gateway, stage_bus: &crate::bus::Broker, controller_bus: &crate::bus::Broker) -> Result<Self, BusError> {
        let stage = stage_bus.connect(GATEWAY_CLIENT_ID, 0)?;
        stage.subscribe("cypha/#", QoS::AtLeastOnce)?;
        let controller = controller_bus.connect(GATEWAY_CLIENT_ID, 0)?;
        controller.subscribe("cypha/+/actuating", QoS::AtLeastOnce)?;
        controller.subscribe("cypha/+/manual", QoS::AtLeastOnce)?;
        Ok(Self { gateway, stage, controller })
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    /// Moves everything queued on both sides. Returns the number of messages handled.
    pub fn pump(&mut self) -> usize {
        let mut handled = 0;
        for from in [Side::Stage, Side::Controller] {
            let (rx, tx) = match from {
                Side::Stage => (&mut self.stage, &self.controller),
                Side::Controller => (&mut self.controller, &self.stage),
            };
            loop {
                let d = match rx.poll() {
                    Ok(Some(d)) => d,
                    Ok(None) => break,
                    Err(e) => {
                        warn!("gateway session lost: {e}");
                        break;
                    }
                };
                if &*d.publisher == GATEWAY_CLIENT_ID {
                    continue;
                }
                handled += 1;
                if let Ok(r) = self.gateway.route(from, d.topic.as_str(), &d.payload) {
                    if let Err(e) = tx.publish(&r.topic, r.bytes, d.qos) {
                        warn!("gateway could not forward `{}`: {e}", r.topic);
                    }
                }
            }
        }
        handled
    }
}
