use std::sync::mpsc::{SyncSender, TrySendError};

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use super::config::ControllerConfig;
use super::fsm::{classify, fsm_step, FsmState, InputSymbol};
use super::supervisor::{Supervisor, SupervisorAction};
use super::telemetry::{parse_telemetry, TelemetryError};
use crate::actuation::{bit, merge_manual, ActuatorCommand, CommandSource, ManualLatch, ManualRequest, Output};
use crate::bus::{BusError, QoS, Session};
use crate::datastore::LogRow;
use crate::edge::SensorRecord;
use crate::gateway::{open, Envelope, IntegrityError, KeyTable};
use crate::StageId;

pub const STATUS_TOPIC: &str = "cypha/controller/state";
pub const CONTROLLER_KEY: &str = "controller";

/// Payload on [`STATUS_TOPIC`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControllerStatus {
    pub fsm: FsmState,
    #[serde(with = "bit")]
    pub wp: bool,
    #[serde(with = "bit")]
    pub ap: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ControllerStats {
    pub records: u64,
    pub missing_field: u64,
    pub out_of_range: u64,
    pub malformed: u64,
    pub integrity_rejected: u64,
    pub manual_commands: u64,
    pub commands_published: u64,
    pub publish_retries: u64,
    pub rows_logged: u64,
    pub rows_dropped: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ControllerEvent {
    Stepped { ts: f64, symbol: InputSymbol, state: FsmState, auto: Output, applied: Output },
    Rejected { reason: String },
    ManualLatched { expires_at: f64 },
    ManualReleased,
    Supervisor(SupervisorAction),
}

/// The Stage-2 controller: verifies and parses telemetry, steps the Moore
/// machine, publishes commands and forwards log rows.
pub struct Controller {
    cfg: ControllerConfig,
    session: Session,
    keys: KeyTable,
    log: SyncSender<LogRow>,
    epoch: f64,
    state: FsmState,
    latch: Option<ManualLatch>,
    supervisor: Supervisor,
    next_log_ms: u64,
    unsent: Option<(ActuatorCommand, ControllerStatus)>,
    last_applied: Output,
    stats: ControllerStats,
    sensing_topic: String,
    manual_topic: String,
    actuating_topic: String,
}

impl Controller {
    pub fn new(
        cfg: ControllerConfig,
        session: Session,
        keys: KeyTable,
        log: SyncSender<LogRow>,
        epoch: f64,
    ) -> Result<Self, BusError> {
        let stage = StageId::S2;
        session.subscribe(&stage.sensing_topic(), QoS::AtMostOnce)?;
        session.subscribe(&stage.manual_topic(), QoS::AtLeastOnce)?;
        Ok(Self {
            supervisor: Supervisor::new(cfg),
            next_log_ms: cfg.log_interval_ms(),
            cfg,
            session,
            keys,
            log,
            epoch,
            state: FsmState::default(),
            latch: None,
            unsent: None,
            last_applied: Output::default(),
            stats: ControllerStats::default(),
            sensing_topic: stage.sensing_topic(),
            manual_topic: stage.manual_topic(),
            actuating_topic: stage.actuating_topic(),
        })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    pub fn state(&self) -> FsmState {
        self.state
    }

    pub fn stats(&self) -> ControllerStats {
        self.stats
    }

    pub fn supervisor(&self) -> &Supervisor {
        &self.supervisor
    }

    pub fn latch(&self) -> Option<&ManualLatch> {
        self.latch.as_ref()
    }

    pub fn status(&self) -> ControllerStatus {
        ControllerStatus { fsm: self.state, wp: self.last_applied.wp, ap: self.last_applied.ap }
    }

    /// Handles everything queued for the controller at virtual time `now`.
    pub fn handle_messages(&mut self, now: f64) -> Vec<ControllerEvent> {
        let mut events = Vec::new();
        if self.latch.is_some_and(|l| !l.is_active(now)) {
            self.latch = None;
            events.push(ControllerEvent::ManualReleased);
        }
        if let Some(a) = self.supervisor.on_tick(now) {
            events.push(ControllerEvent::Supervisor(a));
        }
        self.retry_unsent();
        loop {
            let d = match self.session.poll() {
                Ok(Some(d)) => d,
                Ok(None) => break,
                Err(e) => {
                    debug!("controller session unavailable: {e}");
                    break;
                }
            };
            let env = match open(&self.keys, d.topic.as_str(), &d.payload) {
                Ok(env) => env,
                Err(e) => {
                    self.stats.integrity_rejected += 1;
                    events.push(ControllerEvent::Rejected { reason: e.to_string() });
                    continue;
                }
            };
            if d.topic.as_str() == self.sensing_topic {
                self.on_telemetry(&env, now, &mut events);
            } else if d.topic.as_str() == self.manual_topic {
                self.on_manual(&env.payload, now, &mut events);
            }
        }
        events
    }

    fn on_manual(&mut self, payload: &[u8], now: f64, events: &mut Vec<ControllerEvent>) {
        match ManualRequest::from_json(payload) {
            Ok(req) => {
                self.stats.manual_commands += 1;
                self.latch = ManualLatch::from_request(&req, now, self.cfg.manual_expiry);
                match &self.latch {
                    Some(l) => events.push(ControllerEvent::ManualLatched { expires_at: l.expires_at }),
                    None => events.push(ControllerEvent::ManualReleased),
                }
                // Confirm on the status topic right away so the operator sees the change.
                let applied = merge_manual(self.state.output(), self.latch.as_ref(), now);
                self.last_applied = applied;
                self.publish_status();
            }
            Err(e) => {
                self.stats.malformed += 1;
                events.push(ControllerEvent::Rejected { reason: format!("manual command: {e}") });
            }
        }
    }

    fn on_telemetry(&mut self, env: &Envelope, now: f64, events: &mut Vec<ControllerEvent>) {
        let rec = match parse_telemetry(&env.payload) {
            Ok(r) if r.stage == StageId::S2 => r,
            Ok(r) => {
                self.stats.malformed += 1;
                events.push(ControllerEvent::Rejected { reason: format!("record from {} on Stage-2 topic", r.stage) });
                return;
            }
            Err(e) => {
                match e {
                    TelemetryError::MissingField(_) => self.stats.missing_field += 1,
                    TelemetryError::OutOfPhysicalRange { .. } => self.stats.out_of_range += 1,
                    TelemetryError::MalformedJson(_) => self.stats.malformed += 1,
                }
                events.push(ControllerEvent::Rejected { reason: e.to_string() });
                return;
            }
        };
        self.stats.records += 1;
        let symbol = classify(rec.ph, rec.dissolved_oxygen, &self.cfg);
        let (state, auto) = fsm_step(self.state, symbol);
        self.state = state;
        let applied = merge_manual(auto, self.latch.as_ref(), now);
        self.last_applied = applied;
        events.push(ControllerEvent::Stepped { ts: rec.ts, symbol, state, auto, applied });

        let source = if self.latch.is_some() { CommandSource::Manual } else { CommandSource::Controller };
        let cmd = ActuatorCommand { ts: rec.ts, wp: applied.wp, ap: applied.ap, source };
        self.unsent = Some((cmd, self.status()));
        self.retry_unsent();

        self.maybe_log(&rec, auto);
        if let Some(a) = self.supervisor.on_record(&rec, now) {
            events.push(ControllerEvent::Supervisor(a));
        }
    }

    fn maybe_log(&mut self, rec: &SensorRecord, auto: Output) {
        let elapsed_ms = ((rec.ts - self.epoch) * 1000.0).round();
        if elapsed_ms < self.next_log_ms as f64 {
            return;
        }
        let interval = self.cfg.log_interval_ms();
        self.next_log_ms = (elapsed_ms as u64 / interval + 1) * interval;
        match self.log.try_send(LogRow::from_record(rec, auto)) {
            Ok(()) => self.stats.rows_logged += 1,
            Err(TrySendError::Full(_)) | Err(TrySendError::Disconnected(_)) => {
                self.stats.rows_dropped += 1;
                warn!("log channel full, row at {} dropped", rec.ts);
            }
        }
    }

    fn publish_status(&self) {
        let status = serde_json::to_vec(&self.status()).expect("plain struct serializes");
        if let Err(e) = self.session.publish(STATUS_TOPIC, status, QoS::AtMostOnce) {
            debug!("status not published: {e}");
        }
    }

    /// Publishes the latest command if an earlier attempt failed. Only the
    /// newest command is kept, so an outage never builds a backlog.
    fn retry_unsent(&mut self) {
        let Some((cmd, status)) = self.unsent else {
            return;
        };
        let sealed = match Envelope::seal(&self.keys, &self.actuating_topic, &cmd.to_json(), CONTROLLER_KEY) {
            Ok(e) => e.to_json(),
            Err(IntegrityError::UnknownKey(k)) => {
                warn!("no `{k}` key; commands cannot be sealed");
                self.unsent = None;
                return;
            }
            Err(e) => {
                warn!("sealing failed: {e}");
                self.unsent = None;
                return;
            }
        };
        match self.session.publish(&self.actuating_topic, sealed, QoS::AtLeastOnce) {
            Ok(_) => {
                self.stats.commands_published += 1;
                self.unsent = None;
                let bytes = serde_json::to_vec(&status).expect("plain struct serializes");
                let _ = self.session.publish(STATUS_TOPIC, bytes, QoS::AtMostOnce);
            }
            Err(e) => {
                self.stats.publish_retries += 1;
                debug!("command publish failed, will retry: {e}");
            }
        }
    }
}
