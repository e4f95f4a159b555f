use std::collections::{BTreeMap, VecDeque};

use log::{debug, warn};

use super::alert::{update_alert, AlertState, AlertThresholds};
use super::record::SensorRecord;
use crate::actuation::{merge_manual, ActuatorCommand, ManualLatch, ManualRequest, Output, DEFAULT_MANUAL_EXPIRY};
use crate::bus::{BusError, QoS, Session};
use crate::gateway::{open, Envelope, KeyTable};
use crate::plant::{read_sensors, voltage_to_do, voltage_to_ph, voltage_to_tds, Channel, SensorNoise, World};
use crate::StageId;

/// Sampling period, simulated seconds.
pub const SAMPLE_PERIOD: f64 = 2.0;

/// Records held while the bus is unavailable.
pub const BUFFER_CAPACITY: usize = 1024;

#[derive(Clone, Debug, PartialEq)]
pub struct EdgeConfig {
    pub stage: StageId,
    /// Added to virtual time to form record timestamps.
    pub epoch: f64,
    pub thresholds: AlertThresholds,
    pub manual_expiry: f64,
    /// Only Stage-2 drives its pumps.
    pub accepts_actuation: bool,
    pub buffer_capacity: usize,
}

impl EdgeConfig {
    pub fn new(stage: StageId) -> Self {
        Self {
            stage,
            epoch: 0.0,
            thresholds: AlertThresholds::default(),
            manual_expiry: DEFAULT_MANUAL_EXPIRY,
            accepts_actuation: stage == StageId::S2,
            buffer_capacity: BUFFER_CAPACITY,
        }
    }
}

/// Injected sensor misbehaviour, applied on top of the noisy reading.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SensorFault {
    /// Reports the first faulted reading forever.
    Stuck { value: Option<f64> },
    /// Adds `rate_per_hour × elapsed` to the true reading.
    Drift { rate_per_hour: f64, since: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub enum EdgeEvent {
    Published { ts: f64 },
    Buffered { ts: f64, queued: usize },
    Dropped { ts: f64 },
    Applied { output: Output, manual: bool },
    LatchSet { expires_at: f64 },
    LatchReleased,
    Rejected { topic: String, reason: String },
    AlertChanged(AlertState),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EdgeStats {
    pub sampled: u64,
    pub published: u64,
    pub dropped: u64,
    pub commands_applied: u64,
    pub commands_rejected: u64,
}

struct Pending {
    ts: f64,
    wire: Vec<u8>,
}

/// A stage device: samples the plant, publishes sealed telemetry, and for
/// Stage-2 applies pump commands.
pub struct EdgeAgent {
    cfg: EdgeConfig,
    session: Session,
    keys: KeyTable,
    noise: SensorNoise,
    next_sample: f64,
    buffer: VecDeque<Pending>,
    latch: Option<ManualLatch>,
    controller_output: Option<Output>,
    alert: AlertState,
    faults: BTreeMap<Channel, SensorFault>,
    last_record: Option<SensorRecord>,
    stats: EdgeStats,
    sensing_topic: String,
    actuating_topic: String,
    manual_topic: String,
}

impl EdgeAgent {
    pub fn new(cfg: EdgeConfig, session: Session, keys: KeyTable, noise: SensorNoise) -> Result<Self, BusError> {
        let stage = cfg.stage;
        if cfg.accepts_actuation {
            session.subscribe(&stage.actuating_topic(), QoS::AtLeastOnce)?;
            session.subscribe(&stage.manual_topic(), QoS::AtLeastOnce)?;
        }
        Ok(Self {
            cfg,
            session,
            keys,
            noise,
            next_sample: SAMPLE_PERIOD,
            buffer: VecDeque::new(),
            latch: None,
            controller_output: None,
            alert: AlertState::default(),
            faults: BTreeMap::new(),
            last_record: None,
            stats: EdgeStats::default(),
            sensing_topic: stage.sensing_topic(),
            actuating_topic: stage.actuating_topic(),
            manual_topic: stage.manual_topic(),
        })
    }

    pub fn stage(&self) -> StageId {
        self.cfg.stage
    }

    pub fn stats(&self) -> EdgeStats {
        self.stats
    }

    pub fn alert(&self) -> &AlertState {
        &self.alert
    }

    pub fn latch(&self) -> Option<&ManualLatch> {
        self.latch.as_ref()
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    pub fn last_record(&self) -> Option<&SensorRecord> {
        self.last_record.as_ref()
    }

    pub fn set_fault(&mut self, channel: Channel, fault: Option<SensorFault>) {
        match fault {
            Some(f) => {
                self.faults.insert(channel, f);
            }
            None => {
                self.faults.remove(&channel);
            }
        }
    }

    /// Samples if a 2 s boundary has been reached and publishes, flushing
    /// any backlog first.
    pub fn sample(&mut self, now: f64, world: &World) -> Vec<EdgeEvent> {
        let mut events = Vec::new();
        self.expire_latch_into(now, None, &mut events);
        self.flush(&mut events);
        while now + 1e-9 >= self.next_sample {
            self.next_sample += SAMPLE_PERIOD;
            let rec = self.read(now, world);
            self.stats.sampled += 1;
            let alert = update_alert(&rec, &self.cfg.thresholds);
            if alert != self.alert {
                self.alert = alert.clone();
                events.push(EdgeEvent::AlertChanged(alert));
            }
            let wire = Envelope::seal(&self.keys, &self.sensing_topic, &rec.to_json(), &self.cfg.stage.key_id())
                .map(|e| e.to_json());
            let wire = match wire {
                Ok(w) => w,
                Err(e) => {
                    warn!("{}: cannot seal telemetry: {e}", self.cfg.stage);
                    continue;
                }
            };
            self.last_record = Some(rec);
            self.buffer.push_back(Pending { ts: rec.ts, wire });
            if self.buffer.len() > self.cfg.buffer_capacity {
                let old = self.buffer.pop_front().expect("over capacity");
                self.stats.dropped += 1;
                events.push(EdgeEvent::Dropped { ts: old.ts });
            }
            self.flush(&mut events);
            if !self.buffer.is_empty() {
                events.push(EdgeEvent::Buffered { ts: rec.ts, queued: self.buffer.len() });
            }
        }
        events
    }

    fn read(&mut self, now: f64, world: &World) -> SensorRecord {
        let stage = self.cfg.stage;
        let raw = read_sensors(world.tank(stage), world.environment(), &mut self.noise);
        let (wp, ap) = world.actuator_state(stage);
        let mut rec = SensorRecord {
            ts: self.cfg.epoch + now,
            stage,
            ph: voltage_to_ph(raw.ph_volts),
            tds: voltage_to_tds(raw.tds_volts),
            dissolved_oxygen: voltage_to_do(raw.do_volts),
            water_temp: raw.water_temp,
            air_temp: raw.air_temp,
            humidity: raw.humidity,
            wp,
            ap,
        };
        for (&channel, fault) in self.faults.iter_mut() {
            let true_value = rec.value(channel);
            let v = match fault {
                SensorFault::Stuck { value } => *value.get_or_insert(true_value),
                SensorFault::Drift { rate_per_hour, since } => true_value + *rate_per_hour * (now - *since) / 3600.0,
            };
            let (lo, hi) = super::record::physical_range(channel);
            rec.set_value(channel, v.clamp(lo, hi));
        }
        rec.quantized()
    }

    fn flush(&mut self, events: &mut Vec<EdgeEvent>) {
        while let Some(p) = self.buffer.front() {
            match self.session.publish(&self.sensing_topic, p.wire.clone(), QoS::AtMostOnce) {
                Ok(_) => {
                    events.push(EdgeEvent::Published { ts: p.ts });
                    self.stats.published += 1;
                    self.buffer.pop_front();
                }
                Err(BusError::PayloadTooLarge(n)) => {
                    warn!("{}: dropping {n}-byte record", self.cfg.stage);
                    self.buffer.pop_front();
                }
                Err(_) => break,
            }
        }
    }

    fn expire_latch_into(&mut self, now: f64, world: Option<&mut World>, events: &mut Vec<EdgeEvent>) {
        if self.latch.is_some_and(|l| !l.is_active(now)) {
            self.latch = None;
            events.push(EdgeEvent::LatchReleased);
            if let (Some(world), Some(out)) = (world, self.controller_output) {
                self.apply(out, false, world, events);
            }
        }
    }

    fn apply(&mut self, out: Output, manual: bool, world: &mut World, events: &mut Vec<EdgeEvent>) {
        world.set_stage_actuators(self.cfg.stage, out.wp, out.ap);
        self.stats.commands_applied += 1;
        events.push(EdgeEvent::Applied { output: out, manual });
    }

    /// Drains incoming commands and applies them to the plant.
    pub fn handle_messages(&mut self, now: f64, world: &mut World) -> Vec<EdgeEvent> {
        let mut events = Vec::new();
        self.expire_latch_into(now, Some(world), &mut events);
        loop {
            let d = match self.session.poll() {
                Ok(Some(d)) => d,
                Ok(None) => break,
                Err(e) => {
                    debug!("{}: session unavailable: {e}", self.cfg.stage);
                    break;
                }
            };
            let topic = d.topic.as_str();
            let reject = |reason: String, events: &mut Vec<EdgeEvent>| {
                warn!("ignoring message on `{topic}`: {reason}");
                events.push(EdgeEvent::Rejected { topic: topic.to_owned(), reason });
            };
            if !self.cfg.accepts_actuation {
                continue;
            }
            let env = match open(&self.keys, topic, &d.payload) {
                Ok(env) => env,
                Err(e) => {
                    self.stats.commands_rejected += 1;
                    reject(e.to_string(), &mut events);
                    continue;
                }
            };
            if topic == self.actuating_topic {
                match ActuatorCommand::from_json(&env.payload) {
                    Ok(cmd) => {
                        self.controller_output = Some(cmd.output());
                        let out = merge_manual(cmd.output(), self.latch.as_ref(), now);
                        let manual = self.latch.is_some();
                        self.apply(out, manual, world, &mut events);
                    }
                    Err(e) => {
                        self.stats.commands_rejected += 1;
                        reject(e.to_string(), &mut events);
                    }
                }
            } else if topic == self.manual_topic {
                match ManualRequest::from_json(&env.payload) {
                    Ok(req) => {
                        self.latch = ManualLatch::from_request(&req, now, self.cfg.manual_expiry);
                        let current = world.actuator_state(self.cfg.stage);
                        let base = self.controller_output.unwrap_or(Output::new(current.0, current.1));
                        match &self.latch {
                            Some(l) => events.push(EdgeEvent::LatchSet { expires_at: l.expires_at }),
                            None => events.push(EdgeEvent::LatchReleased),
                        }
                        let out = merge_manual(base, self.latch.as_ref(), now);
                        let manual = self.latch.is_some();
                        self.apply(out, manual, world, &mut events);
                    }
                    Err(e) => {
                        self.stats.commands_rejected += 1;
                        reject(e.to_string(), &mut events);
                    }
                }
            }
        }
        events
    }
}
