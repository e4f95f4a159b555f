use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::mpsc::{self, Receiver};

use log::info;
use serde::Serialize;

use super::file::{Action, BusSide, Event, PumpKindName, Scenario};
use crate::actuation::ManualRequest;
use crate::bus::{Broker, BrokerStats, BusError, LossModel, QoS, Session};
use crate::controller::{Controller, ControllerEvent, ControllerStats, SupervisorAction};
use crate::datastore::{DataStore, LogRow, StoreConfig, StoreError};
use crate::edge::{EdgeAgent, EdgeConfig, EdgeEvent, SensorFault};
use crate::gateway::{Envelope, Gateway, GatewayNode, GatewayStats, KeyTable};
use crate::plant::{Route, SensorNoise, SimError, SimEvent, World};
use crate::StageId;

/// Client id the runner uses for scripted operator commands.
pub const HMI_CLIENT_ID: &str = "hmi";

/// Bound on the controller → datastore channel.
pub const LOG_CHANNEL_CAPACITY: usize = 4096;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("t={t}: invariant violated: {source}")]
    Invariant { t: f64, source: SimError },
    #[error("plant setup: {0}")]
    Plant(#[from] SimError),
    #[error("bus setup: {0}")]
    Bus(#[from] BusError),
    #[error("datastore: {0}")]
    Store(#[from] StoreError),
    #[error("writing outputs: {0}")]
    Io(#[from] std::io::Error),
    #[error("exporting CSV: {0}")]
    Csv(#[from] crate::datastore::CsvError),
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct Stat {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct AlertCount {
    /// Samples with the LED on.
    pub samples: u64,
    /// Off → on transitions.
    pub onsets: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BusSummary {
    pub stage: BrokerStatsView,
    pub controller: BrokerStatsView,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct BrokerStatsView {
    pub published: u64,
    pub delivered: u64,
    pub lost: u64,
    pub retransmitted: u64,
}

impl From<BrokerStats> for BrokerStatsView {
    fn from(s: BrokerStats) -> Self {
        Self { published: s.published, delivered: s.delivered, lost: s.lost, retransmitted: s.retransmitted }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GatewaySummary {
    pub to_controller: u64,
    pub to_stage: u64,
    pub rejected: u64,
}

impl From<GatewayStats> for GatewaySummary {
    fn from(s: GatewayStats) -> Self {
        Self { to_controller: s.to_controller, to_stage: s.to_stage, rejected: s.rejected() }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VolumeSummary {
    pub total: f64,
    pub expected: f64,
    pub drift: f64,
}

/// Written to `summary.json`.
#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub duration: f64,
    pub seed: u64,
    pub rows: usize,
    pub csv_bytes: u64,
    pub parameters: BTreeMap<&'static str, Stat>,
    /// Fraction of simulated seconds each Stage-2 relay was on.
    pub duty: BTreeMap<&'static str, f64>,
    pub alerts: BTreeMap<&'static str, AlertCount>,
    pub controller: ControllerStats,
    pub gateway: GatewaySummary,
    pub bus: BusSummary,
    pub recirculations: u64,
    pub rejections: u64,
    pub circulation_cycles: u64,
    pub overflow_steps: u64,
    pub dry_run_steps: u64,
    pub telemetry_dropped: u64,
    pub volume: VolumeSummary,
    /// Final litres per tank.
    pub tanks: BTreeMap<&'static str, f64>,
}

#[derive(Default)]
struct Accumulator {
    sums: [f64; 6],
    mins: [f64; 6],
    maxs: [f64; 6],
    n: u64,
}

impl Accumulator {
    const NAMES: [&'static str; 6] = ["ph", "tds", "do", "water_temp", "air_temp", "humidity"];

    fn add(&mut self, r: &LogRow) {
        let v = [r.ph, r.tds, r.dissolved_oxygen, r.water_temp, r.air_temp, r.humidity];
        for (i, &x) in v.iter().enumerate() {
            if self.n == 0 {
                self.mins[i] = x;
                self.maxs[i] = x;
            }
            self.sums[i] += x;
            self.mins[i] = self.mins[i].min(x);
            self.maxs[i] = self.maxs[i].max(x);
        }
        self.n += 1;
    }

    fn stats(&self) -> BTreeMap<&'static str, Stat> {
        Self::NAMES
            .iter()
            .enumerate()
            .map(|(i, &name)| {
                let mean = if self.n == 0 { 0.0 } else { self.sums[i] / self.n as f64 };
                (name, Stat { min: self.mins[i], max: self.maxs[i], mean })
            })
            .collect()
    }
}

enum Revert {
    Sensor(StageId, crate::plant::Channel),
    Pump(StageId, PumpKindName),
    Loss(BusSide),
    Outage(BusSide),
}

/// Paths of a finished run.
#[derive(Clone, Debug)]
pub struct RunOutputs {
    pub csv: PathBuf,
    pub events: PathBuf,
    pub summary: PathBuf,
    pub store: PathBuf,
}

/// Owns the virtual clock and every component of one run.
pub struct Runner {
    scenario: Scenario,
    world: World,
    stage_bus: Broker,
    controller_bus: Broker,
    edges: Vec<EdgeAgent>,
    gateway: GatewayNode,
    controller: Controller,
    hmi: Session,
    keys: KeyTable,
    log_rx: Receiver<LogRow>,
    store: DataStore,
    out_dir: PathBuf,
    event_log: String,
    next_event: usize,
    reverts: Vec<(f64, Revert)>,
    tick: u64,
    ticks_total: u64,
    substeps: u32,
    wp_on: u64,
    ap_on: u64,
    acc: Accumulator,
    alerts: BTreeMap<&'static str, AlertCount>,
    overflow_steps: u64,
    dry_run_steps: u64,
    circulation_cycles: u64,
    last_state: Option<crate::controller::FsmState>,
}

fn brokers_for(side: BusSide, stage: &Broker, controller: &Broker) -> Vec<Broker> {
    match side {
        BusSide::Stage => vec![stage.clone()],
        BusSide::Controller => vec![controller.clone()],
        BusSide::Both => vec![stage.clone(), controller.clone()],
    }
}

impl Runner {
    /// Builds the full stack. Outputs go to `out_dir`, which is created.
    pub fn new(scenario: Scenario, keys: KeyTable, out_dir: &Path) -> Result<Self, RunError> {
        fs::create_dir_all(out_dir)?;
        let store_dir = out_dir.join("store");
        if store_dir.exists() {
            fs::remove_dir_all(&store_dir)?;
        }
        let store = DataStore::open(StoreConfig::new(&store_dir))?;
        let world = World::new(scenario.plant.clone(), scenario.tanks.clone())?;
        world.check_invariants()?;
        let stage_bus = Broker::default();
        let controller_bus = Broker::default();
        let gateway = GatewayNode::attach(Gateway::new(keys.clone()), &stage_bus, &controller_bus)?;
        let mut edges = Vec::new();
        for stage in StageId::ALL {
            let cfg = EdgeConfig {
                epoch: scenario.epoch,
                thresholds: scenario.controller.thresholds(),
                manual_expiry: scenario.controller.manual_expiry,
                ..EdgeConfig::new(stage)
            };
            let session = stage_bus.connect(&format!("{}-edge", stage.key_id()), 0)?;
            let noise = SensorNoise::new(scenario.plant.noise_fraction, scenario.seed, u64::from(stage.number()));
            edges.push(EdgeAgent::new(cfg, session, keys.clone(), noise)?);
        }
        let (log_tx, log_rx) = mpsc::sync_channel(LOG_CHANNEL_CAPACITY);
        let controller = Controller::new(
            scenario.controller,
            controller_bus.connect("controller", 0)?,
            keys.clone(),
            log_tx,
            scenario.epoch,
        )?;
        let hmi = controller_bus.connect(HMI_CLIENT_ID, 0)?;
        let substeps = (1.0 / scenario.plant.dt).ceil().max(1.0) as u32;
        let ticks_total = scenario.duration.floor() as u64;
        let alerts = StageId::ALL.iter().map(|s| (s.as_str(), AlertCount::default())).collect();
        Ok(Self {
            scenario,
            world,
            stage_bus,
            controller_bus,
            edges,
            gateway,
            controller,
            hmi,
            keys,
            log_rx,
            store,
            out_dir: out_dir.to_path_buf(),
            event_log: String::new(),
            next_event: 0,
            reverts: Vec::new(),
            tick: 0,
            ticks_total,
            substeps,
            wp_on: 0,
            ap_on: 0,
            acc: Accumulator::default(),
            alerts,
            overflow_steps: 0,
            dry_run_steps: 0,
            circulation_cycles: 0,
            last_state: None,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn controller(&self) -> &Controller {
        &self.controller
    }

    pub fn edge(&self, stage: StageId) -> &EdgeAgent {
        &self.edges[stage.index()]
    }

    pub fn stage_bus(&self) -> &Broker {
        &self.stage_bus
    }

    pub fn controller_bus(&self) -> &Broker {
        &self.controller_bus
    }

    pub fn gateway_stats(&self) -> GatewayStats {
        self.gateway.gateway().stats()
    }

    pub fn keys(&self) -> &KeyTable {
        &self.keys
    }

    /// Virtual seconds elapsed.
    pub fn now(&self) -> f64 {
        self.tick as f64
    }

    pub fn is_finished(&self) -> bool {
        self.tick >= self.ticks_total
    }

    pub fn rows_logged(&self) -> usize {
        self.store.len()
    }

    pub fn event_log(&self) -> &str {
        &self.event_log
    }

    fn note(&mut self, t: f64, what: std::fmt::Arguments<'_>) {
        let _ = writeln!(self.event_log, "{t:.3} {what}");
    }

    /// Advances one simulated second.
    pub fn step(&mut self) -> Result<(), RunError> {
        self.tick += 1;
        let now = self.now();
        self.stage_bus.tick(now);
        self.controller_bus.tick(now);
        self.apply_events(now);

        let dt = 1.0 / f64::from(self.substeps);
        for _ in 0..self.substeps {
            let report = self.world.step(dt).map_err(|source| RunError::Invariant { t: now, source })?;
            for e in report.events {
                match e {
                    SimEvent::Overflow { .. } => self.overflow_steps += 1,
                    SimEvent::DryRun { .. } => self.dry_run_steps += 1,
                    SimEvent::CirculationStarted => self.note(now, format_args!("circulation started")),
                    SimEvent::CirculationFinished => {
                        self.circulation_cycles += 1;
                        self.note(now, format_args!("circulation finished"));
                    }
                    other => self.note(now, format_args!("{other:?}")),
                }
            }
        }
        self.world.check_invariants().map_err(|source| RunError::Invariant { t: now, source })?;

        for i in 0..self.edges.len() {
            let events = self.edges[i].sample(now, &self.world);
            self.record_edge_events(i, now, events);
        }
        self.pump_messages(now);
        let (wp, ap) = self.world.actuator_state(StageId::S2);
        self.wp_on += u64::from(wp);
        self.ap_on += u64::from(ap);
        while let Ok(row) = self.log_rx.try_recv() {
            self.acc.add(&row);
            self.store.append(row)?;
        }
        Ok(())
    }

    fn record_edge_events(&mut self, i: usize, now: f64, events: Vec<EdgeEvent>) {
        let stage = self.edges[i].stage();
        for e in events {
            match e {
                EdgeEvent::AlertChanged(a) => {
                    let count = self.alerts.get_mut(stage.as_str()).expect("all stages");
                    if a.led {
                        count.onsets += 1;
                    }
                    let params: Vec<&str> = a.violated.iter().map(|p| p.as_str()).collect();
                    self.note(now, format_args!("{stage} alert led={} [{}]", u8::from(a.led), params.join(",")));
                }
                EdgeEvent::Dropped { ts } => self.note(now, format_args!("{stage} dropped record ts={ts:.3}")),
                EdgeEvent::LatchSet { expires_at } => {
                    self.note(now, format_args!("{stage} manual latch until {expires_at:.3}"))
                }
                EdgeEvent::LatchReleased => self.note(now, format_args!("{stage} manual latch released")),
                EdgeEvent::Rejected { topic, reason } => {
                    self.note(now, format_args!("{stage} rejected message on {topic}: {reason}"))
                }
                EdgeEvent::Published { .. } | EdgeEvent::Buffered { .. } | EdgeEvent::Applied { .. } => {}
            }
        }
        if self.edges[i].alert().led && self.edges[i].last_record().is_some_and(|r| r.ts == self.scenario.epoch + now) {
            self.alerts.get_mut(stage.as_str()).expect("all stages").samples += 1;
        }
    }

    fn pump_messages(&mut self, now: f64) {
        for _ in 0..16 {
            let mut activity = self.gateway.pump();
            let events = self.controller.handle_messages(now);
            activity += events.len();
            for e in events {
                self.on_controller_event(now, e);
            }
            for i in 0..self.edges.len() {
                let events = self.edges[i].handle_messages(now, &mut self.world);
                activity += events.len();
                self.record_edge_events(i, now, events);
            }
            activity += self.hmi.drain().len();
            if activity == 0 {
                break;
            }
        }
    }

    fn on_controller_event(&mut self, now: f64, e: ControllerEvent) {
        match e {
            ControllerEvent::Stepped { state, .. } => {
                if self.last_state != Some(state) {
                    self.last_state = Some(state);
                    self.note(now, format_args!("fsm {state} output {}", state.output()));
                }
            }
            ControllerEvent::Rejected { reason } => self.note(now, format_args!("controller rejected: {reason}")),
            ControllerEvent::ManualLatched { expires_at } => {
                self.note(now, format_args!("controller manual latch until {expires_at:.3}"))
            }
            ControllerEvent::ManualReleased => self.note(now, format_args!("controller manual latch released")),
            ControllerEvent::Supervisor(a) => self.apply_supervisor(now, a),
        }
    }

    fn apply_supervisor(&mut self, now: f64, a: SupervisorAction) {
        match a {
            SupervisorAction::Circulate => {
                self.world.scheduler_mut().request_cycle();
                self.note(now, format_args!("supervisor circulation requested"));
            }
            SupervisorAction::Recirculate { seconds, attempt } => {
                self.world.run_route_for(Route::S1ToS5, seconds);
                self.note(now, format_args!("supervisor recirculate S1->S5 for {seconds} s (attempt {attempt})"));
            }
            SupervisorAction::RejectWater { fraction } => {
                let liters = self.world.tank(StageId::S1).volume * fraction;
                let out = self.world.reject(StageId::S1, liters);
                let inn = self.world.intake(liters);
                self.note(now, format_args!("supervisor rejected water: {out:?}, fresh intake: {inn:?}"));
            }
        }
    }

    fn apply_events(&mut self, now: f64) {
        let mut due = Vec::new();
        self.reverts.retain(|(t, r)| {
            if *t <= now {
                due.push(match r {
                    Revert::Sensor(s, c) => Revert::Sensor(*s, *c),
                    Revert::Pump(s, p) => Revert::Pump(*s, *p),
                    Revert::Loss(b) => Revert::Loss(*b),
                    Revert::Outage(b) => Revert::Outage(*b),
                });
                false
            } else {
                true
            }
        });
        for r in due {
            self.revert(now, r);
        }
        while let Some(ev) = self.scenario.events.get(self.next_event).cloned() {
            if ev.at > now {
                break;
            }
            self.next_event += 1;
            self.apply_event(now, &ev);
        }
    }

    fn apply_event(&mut self, now: f64, ev: &Event) {
        let until = ev.duration.map(|d| now + d);
        match &ev.action {
            Action::Manual(req) => {
                let req = ManualRequest { ts: Some(self.scenario.epoch + now), ..req.clone() };
                let topic = StageId::S2.manual_topic();
                let sealed = Envelope::seal(&self.keys, &topic, &req.to_json(), "hmi").map(|e| e.to_json());
                match sealed.map(|bytes| self.hmi.publish(&topic, bytes, QoS::AtLeastOnce)) {
                    Ok(Ok(_)) => self.note(now, format_args!("event manual {}", String::from_utf8_lossy(&req.to_json()))),
                    Ok(Err(e)) => self.note(now, format_args!("event manual not sent: {e}")),
                    Err(e) => self.note(now, format_args!("event manual not sealed: {e}")),
                }
            }
            Action::SensorStuck { stage, channel } => {
                self.edges[stage.index()].set_fault(*channel, Some(SensorFault::Stuck { value: None }));
                self.schedule(until, Revert::Sensor(*stage, *channel));
                self.note(now, format_args!("fault sensor_stuck {stage} {}", channel.as_str()));
            }
            Action::SensorDrift { stage, channel, rate_per_hour } => {
                let fault = SensorFault::Drift { rate_per_hour: *rate_per_hour, since: now };
                self.edges[stage.index()].set_fault(*channel, Some(fault));
                self.schedule(until, Revert::Sensor(*stage, *channel));
                self.note(now, format_args!("fault sensor_drift {stage} {} {rate_per_hour}/h", channel.as_str()));
            }
            Action::PumpFailure { stage, pump } => {
                self.set_pump_failed(*stage, *pump, true);
                self.schedule(until, Revert::Pump(*stage, *pump));
                self.note(now, format_args!("fault pump_failure {stage} {pump:?}"));
            }
            Action::BusLoss { probability, bus } => {
                for (i, b) in brokers_for(*bus, &self.stage_bus, &self.controller_bus).into_iter().enumerate() {
                    let seed = self.scenario.seed ^ (ev.line as u64) << 8 ^ i as u64;
                    b.set_loss(Some(LossModel::new(*probability, seed)));
                }
                self.schedule(until, Revert::Loss(*bus));
                self.note(now, format_args!("fault bus_loss {bus:?} p={probability}"));
            }
            Action::BusOutage { bus } => {
                for b in brokers_for(*bus, &self.stage_bus, &self.controller_bus) {
                    b.set_online(false);
                }
                self.schedule(until, Revert::Outage(*bus));
                self.note(now, format_args!("fault bus_outage {bus:?}"));
            }
            Action::Intake { liters } => {
                let e = self.world.intake(*liters);
                self.note(now, format_args!("event {e:?}"));
            }
            Action::Reject { stage, liters } => {
                let e = self.world.reject(*stage, *liters);
                self.note(now, format_args!("event {e:?}"));
            }
        }
    }

    fn schedule(&mut self, until: Option<f64>, r: Revert) {
        if let Some(t) = until {
            self.reverts.push((t, r));
        }
    }

    fn set_pump_failed(&mut self, stage: StageId, pump: PumpKindName, failed: bool) {
        match pump {
            PumpKindName::Water => {
                for &r in World::stage_water_routes(stage) {
                    self.world.set_water_pump_failed(r, failed);
                }
            }
            PumpKindName::Aeration => self.world.set_aerator_failed(stage, failed),
        }
    }

    fn revert(&mut self, now: f64, r: Revert) {
        match r {
            Revert::Sensor(stage, channel) => {
                self.edges[stage.index()].set_fault(channel, None);
                self.note(now, format_args!("cleared sensor fault {stage} {}", channel.as_str()));
            }
            Revert::Pump(stage, pump) => {
                self.set_pump_failed(stage, pump, false);
                self.note(now, format_args!("cleared pump_failure {stage} {pump:?}"));
            }
            Revert::Loss(bus) => {
                for b in brokers_for(bus, &self.stage_bus, &self.controller_bus) {
                    b.set_loss(None);
                }
                self.note(now, format_args!("cleared bus_loss {bus:?}"));
            }
            Revert::Outage(bus) => {
                for b in brokers_for(bus, &self.stage_bus, &self.controller_bus) {
                    b.set_online(true);
                }
                self.note(now, format_args!("cleared bus_outage {bus:?}"));
            }
        }
    }

    /// Runs to the scenario's end.
    pub fn run(&mut self) -> Result<(), RunError> {
        while !self.is_finished() {
            self.step()?;
        }
        Ok(())
    }

    pub fn summary(&self, csv_bytes: u64) -> Summary {
        let secs = self.tick.max(1) as f64;
        let total = self.world.total_volume();
        let expected = self.world.expected_total();
        Summary {
            duration: self.now(),
            seed: self.scenario.seed,
            rows: self.store.len(),
            csv_bytes,
            parameters: self.acc.stats(),
            duty: [("wp", self.wp_on as f64 / secs), ("ap", self.ap_on as f64 / secs)].into_iter().collect(),
            alerts: self.alerts.clone(),
            controller: self.controller.stats(),
            gateway: self.gateway.gateway().stats().into(),
            bus: BusSummary { stage: self.stage_bus.stats().into(), controller: self.controller_bus.stats().into() },
            recirculations: self.controller.supervisor().recirculations(),
            rejections: self.controller.supervisor().rejections(),
            circulation_cycles: self.circulation_cycles,
            overflow_steps: self.overflow_steps,
            dry_run_steps: self.dry_run_steps,
            telemetry_dropped: self.edges.iter().map(|e| e.stats().dropped).sum(),
            volume: VolumeSummary { total, expected, drift: total - expected },
            tanks: self.world.tanks().iter().map(|t| (t.stage.as_str(), t.volume)).collect(),
        }
    }

    /// Flushes the store and writes `log.csv`, `events.log` and `summary.json`.
    pub fn finish(mut self) -> Result<(RunOutputs, Summary), RunError> {
        while let Ok(row) = self.log_rx.try_recv() {
            self.acc.add(&row);
            self.store.append(row)?;
        }
        self.store.flush()?;
        let csv = self.out_dir.join("log.csv");
        let csv_bytes = self.store.export_csv(&csv)?;
        let events = self.out_dir.join("events.log");
        fs::write(&events, &self.event_log)?;
        let summary = self.summary(csv_bytes);
        let summary_path = self.out_dir.join("summary.json");
        let mut json = serde_json::to_string_pretty(&summary).expect("summary serializes");
        json.push('\n');
        fs::write(&summary_path, json)?;
        info!("run finished: {} rows, {csv_bytes} CSV bytes", summary.rows);
        Ok((
            RunOutputs { csv, events, summary: summary_path, store: self.out_dir.join("store") },
            summary,
        ))
    }
}

/// Parses, runs and writes a scenario in one call.
pub fn run_scenario(scenario: Scenario, keys: KeyTable, out_dir: &Path) -> Result<(RunOutputs, Summary), RunError> {
    let mut r = Runner::new(scenario, keys, out_dir)?;
    r.run()?;
    r.finish()
}
