use std::path::Path;

use serde::Deserialize;
use toml::Spanned;

use crate::actuation::ManualRequest;
use crate::controller::ControllerConfig;
use crate::plant::{Channel, SimConfig, SimError, TankState, World};
use crate::StageId;

/// Default start of virtual time, 2023-01-01T00:00:00Z.
pub const DEFAULT_EPOCH: f64 = 1_672_531_200.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cannot read scenario: {0}")]
    Io(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusSide {
    Stage,
    Controller,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PumpKindName {
    Water,
    Aeration,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Action {
    Manual(ManualRequest),
    SensorStuck { stage: StageId, channel: Channel },
    SensorDrift { stage: StageId, channel: Channel, rate_per_hour: f64 },
    PumpFailure { stage: StageId, pump: PumpKindName },
    BusLoss { probability: f64, bus: BusSide },
    BusOutage { bus: BusSide },
    Intake { liters: f64 },
    Reject { stage: StageId, liters: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Event {
    pub at: f64,
    /// How long a fault lasts; `None` means until the end of the run.
    pub duration: Option<f64>,
    pub action: Action,
    /// Source line of the event, for diagnostics.
    pub line: usize,
}

/// Initial-state override for one tank; absent fields keep the defaults.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TankOverride {
    pub stage: StageId,
    pub volume: Option<f64>,
    pub ph: Option<f64>,
    #[serde(rename = "do")]
    pub dissolved_oxygen: Option<f64>,
    pub tds: Option<f64>,
    pub ammonia: Option<f64>,
    pub water_temp: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub duration: f64,
    pub speed: f64,
    pub seed: u64,
    pub epoch: f64,
    pub plant: SimConfig,
    pub tanks: [TankState; 5],
    pub controller: ControllerConfig,
    pub events: Vec<Event>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    sim: Spanned<RawSim>,
    #[serde(default)]
    controller: Option<Spanned<ControllerConfig>>,
    #[serde(default)]
    events: Vec<Spanned<RawEvent>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSim {
    duration: Option<f64>,
    duration_hours: Option<f64>,
    #[serde(default = "one")]
    speed: f64,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_epoch")]
    epoch: f64,
    #[serde(default)]
    plant: SimConfig,
    #[serde(default)]
    tanks: Vec<TankOverride>,
}

fn one() -> f64 {
    1.0
}

fn default_epoch() -> f64 {
    DEFAULT_EPOCH
}

#[derive(Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum EventKind {
    Manual,
    Fault,
    Intake,
    Reject,
}

#[derive(Deserialize)]
#[serde(rename_all = "snake_case")]
enum FaultKind {
    SensorStuck,
    SensorDrift,
    PumpFailure,
    BusLoss,
    BusOutage,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEvent {
    at: f64,
    kind: EventKind,
    fault: Option<FaultKind>,
    stage: Option<StageId>,
    param: Option<Channel>,
    rate: Option<f64>,
    pump: Option<PumpKindName>,
    prob: Option<f64>,
    window: Option<f64>,
    duration: Option<f64>,
    bus: Option<BusSide>,
    liters: Option<f64>,
    wp: Option<u8>,
    ap: Option<u8>,
    #[serde(default)]
    release: bool,
    note: Option<String>,
}

fn line_of(src: &str, offset: usize) -> usize {
    src.as_bytes()[..offset.min(src.len())].iter().filter(|&&b| b == b'\n').count() + 1
}

fn bit(v: Option<u8>, name: &str) -> Result<Option<bool>, String> {
    match v {
        None => Ok(None),
        Some(0) => Ok(Some(false)),
        Some(1) => Ok(Some(true)),
        Some(x) => Err(format!("`{name}` must be 0 or 1, got {x}")),
    }
}

impl RawEvent {
    fn into_event(self, line: usize) -> Result<Event, String> {
        if !(self.at.is_finite() && self.at >= 0.0) {
            return Err(format!("event time {} must be a non-negative number", self.at));
        }
        let need = |v: Option<f64>, name: &str| v.ok_or_else(|| format!("missing `{name}`"));
        let stage = |v: Option<StageId>| v.ok_or_else(|| "missing `stage`".to_owned());
        let duration = match (self.window, self.duration) {
            (Some(_), Some(_)) => return Err("give only one of `window` and `duration`".into()),
            (w, d) => w.or(d),
        };
        if duration.is_some() && self.kind != EventKind::Fault {
            return Err("`window` only applies to faults".into());
        }
        let action = match self.kind {
            EventKind::Manual => Action::Manual(ManualRequest {
                ts: None,
                wp: bit(self.wp, "wp")?,
                ap: bit(self.ap, "ap")?,
                release: self.release,
                source: None,
                operator_note: self.note,
            }),
            EventKind::Intake => Action::Intake { liters: need(self.liters, "liters")? },
            EventKind::Reject => Action::Reject { stage: stage(self.stage)?, liters: need(self.liters, "liters")? },
            EventKind::Fault => match self.fault.ok_or("missing `fault`")? {
                FaultKind::SensorStuck => Action::SensorStuck {
                    stage: stage(self.stage)?,
                    channel: self.param.ok_or("missing `param`")?,
                },
                FaultKind::SensorDrift => Action::SensorDrift {
                    stage: stage(self.stage)?,
                    channel: self.param.ok_or("missing `param`")?,
                    rate_per_hour: need(self.rate, "rate")?,
                },
                FaultKind::PumpFailure => Action::PumpFailure {
                    stage: stage(self.stage)?,
                    pump: self.pump.unwrap_or(PumpKindName::Water),
                },
                FaultKind::BusLoss => {
                    let probability = need(self.prob, "prob")?;
                    if !(0.0..1.0).contains(&probability) {
                        return Err(format!("`prob` {probability} must be in [0, 1)"));
                    }
                    need(duration, "window")?;
                    Action::BusLoss { probability, bus: self.bus.unwrap_or(BusSide::Both) }
                }
                FaultKind::BusOutage => {
                    need(duration, "window")?;
                    Action::BusOutage { bus: self.bus.unwrap_or(BusSide::Both) }
                }
            },
        };
        if let Some(d) = duration {
            if !(d.is_finite() && d > 0.0) {
                return Err(format!("duration/window {d} must be positive"));
            }
        }
        if let Action::Intake { liters } | Action::Reject { liters, .. } = action {
            if !(liters.is_finite() && liters >= 0.0) {
                return Err(format!("`liters` {liters} must be non-negative"));
            }
        }
        Ok(Event { at: self.at, duration, action, line })
    }
}

impl Scenario {
    pub fn from_toml_str(src: &str) -> Result<Self, ScenarioError> {
        let err = |offset: usize, message: String| ScenarioError::Parse { line: line_of(src, offset), message };
        let raw: RawFile = toml::from_str(src).map_err(|e| {
            let offset = e.span().map_or(0, |s| s.start);
            err(offset, e.message().to_owned())
        })?;
        let sim_span = raw.sim.span().start;
        let sim = raw.sim.into_inner();
        let duration = match (sim.duration, sim.duration_hours) {
            (Some(d), None) => d,
            (None, Some(h)) => h * 3600.0,
            (None, None) => return Err(err(sim_span, "[sim] needs `duration` or `duration_hours`".into())),
            (Some(_), Some(_)) => return Err(err(sim_span, "give only one of `duration` and `duration_hours`".into())),
        };
        if !(duration.is_finite() && duration >= 1.0) {
            return Err(err(sim_span, format!("duration {duration} must be at least 1 s")));
        }
        if !(sim.speed.is_finite() && sim.speed >= 1.0) {
            return Err(err(sim_span, format!("speed {} must be at least 1", sim.speed)));
        }
        if !sim.epoch.is_finite() {
            return Err(err(sim_span, "epoch must be finite".into()));
        }
        let mut plant = sim.plant;
        plant.rng_seed = sim.seed;
        plant.validate().map_err(|e| err(sim_span, e.to_string()))?;
        let mut tanks = World::default_tanks(&plant);
        for o in &sim.tanks {
            let t = &mut tanks[o.stage.index()];
            t.volume = o.volume.unwrap_or(t.volume);
            t.ph = o.ph.unwrap_or(t.ph);
            t.dissolved_oxygen = o.dissolved_oxygen.unwrap_or(t.dissolved_oxygen);
            t.tds = o.tds.unwrap_or(t.tds);
            t.ammonia = o.ammonia.unwrap_or(t.ammonia);
            t.water_temp = o.water_temp.unwrap_or(t.water_temp);
        }
        World::new(plant.clone(), tanks.clone()).map_err(|e: SimError| err(sim_span, e.to_string()))?;
        let controller = match raw.controller {
            Some(c) => {
                let span = c.span().start;
                let cfg = c.into_inner();
                cfg.validate().map_err(|e| err(span, e.to_string()))?;
                cfg
            }
            None => ControllerConfig::default(),
        };
        let mut events = Vec::with_capacity(raw.events.len());
        for e in raw.events {
            let line = line_of(src, e.span().start);
            let ev = e.into_inner().into_event(line).map_err(|m| ScenarioError::Parse { line, message: m })?;
            if let Some(prev) = events.last() {
                let prev: &Event = prev;
                if ev.at < prev.at {
                    return Err(ScenarioError::Parse {
                        line,
                        message: format!("events must be time-sorted: {} comes after {}", ev.at, prev.at),
                    });
                }
            }
            events.push(ev);
        }
        Ok(Self { duration, speed: sim.speed, seed: sim.seed, epoch: sim.epoch, plant, tanks, controller, events })
    }

    pub fn from_path(path: &Path) -> Result<Self, ScenarioError> {
        let src = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&src)
    }

    /// A quiet scenario with default plant and controller settings.
    pub fn quiet(duration: f64, seed: u64) -> Self {
        let plant = SimConfig { rng_seed: seed, ..SimConfig::default() };
        let tanks = World::default_tanks(&plant);
        Self {
            duration,
            speed: 1.0,
            seed,
            epoch: DEFAULT_EPOCH,
            plant,
            tanks,
            controller: ControllerConfig::default(),
            events: Vec::new(),
        }
    }
}
