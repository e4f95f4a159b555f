//! One line per acceptance criterion; the test fails if any line is FAIL.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::thread;
use std::time::Instant;

use common::{record, Rig};
use cypha_core::bus::{matches, Broker, LossModel, QoS, Topic, TopicFilter};
use cypha_core::controller::{fsm_step, ControllerConfig, FsmState, InputSymbol};
use cypha_core::gateway::{Envelope, Gateway, GatewayNode, KeyTable};
use cypha_core::plant::{Route, SimConfig, World};
use cypha_core::scenario::{replay_csv, run_scenario, Runner, Scenario};
use cypha_core::StageId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fsm_table() -> Outcome {
    let start = Instant::now();
    let symbols = [InputSymbol::A, InputSymbol::B, InputSymbol::C, InputSymbol::D];
    let next = [FsmState::Q1, FsmState::Q2, FsmState::Q3, FsmState::Q4];
    let bits = ["00", "01", "10", "11"];
    let mut mismatches = 0;
    for s in FsmState::ALL {
        for (i, sym) in symbols.into_iter().enumerate() {
            let (n, out) = fsm_step(s, sym);
            if n != next[i] || out.to_string() != bits[i] {
                mismatches += 1;
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    check(mismatches == 0 && elapsed < 1.0, format!("16 cases, {mismatches} mismatches, {elapsed:.6} s"))
}

fn threshold_behaviour() -> Outcome {
    let mut rig = Rig::new(ControllerConfig::default());
    let a = rig.send(&record(2.0, 6.0, 4.0), 2.0).ok_or("no command for (6.0, 4.0)")?;
    let b = rig.send(&record(4.0, 7.0, 2.0), 4.0).ok_or("no command for (7.0, 2.0)")?;
    let detail = format!(
        "(ph 6.0, do 4.0) -> wp={} ap={}; (ph 7.0, do 2.0) -> wp={} ap={}; same cycle",
        u8::from(a.wp),
        u8::from(a.ap),
        u8::from(b.wp),
        u8::from(b.ap)
    );
    check((a.wp, a.ap, b.wp, b.ap) == (true, false, false, true), detail)
}

struct LongRun {
    rows: usize,
    csv_bytes: u64,
    secs: f64,
    csv: std::path::PathBuf,
    cfg: ControllerConfig,
}

fn long_run(dir: &Path) -> Result<LongRun, String> {
    let mut sc = Scenario::quiet(72.0 * 3600.0, 42);
    sc.speed = 5000.0;
    let cfg = sc.controller;
    let start = Instant::now();
    let (out, summary) = run_scenario(sc, KeyTable::derived(42), dir).map_err(|e| e.to_string())?;
    Ok(LongRun { rows: summary.rows, csv_bytes: summary.csv_bytes, secs: start.elapsed().as_secs_f64(), csv: out.csv, cfg })
}

fn seventy_two_hours(run: &LongRun) -> Outcome {
    let target = 2.8e6;
    let rel = (run.csv_bytes as f64 - target) / target;
    let detail = format!("{} rows, {} CSV bytes ({:+.1}%), {:.1} s", run.rows, run.csv_bytes, rel * 100.0, run.secs);
    check(run.rows.abs_diff(30_000) <= 1 && rel.abs() <= 0.15 && run.secs < 60.0, detail)
}

fn do_recovery(dir: &Path) -> Outcome {
    let src = "[sim]\nduration_hours = 2\nseed = 5\n\n[[sim.tanks]]\nstage = \"S2\"\ndo = 1.0\n";
    let sc = Scenario::from_toml_str(src).map_err(|e| e.to_string())?;
    let mut runner = Runner::new(sc, KeyTable::derived(5), dir).map_err(|e| e.to_string())?;
    let mut aerated = false;
    while !runner.is_finished() {
        runner.step().map_err(|e| e.to_string())?;
        aerated |= runner.world().actuator_state(StageId::S2).1;
        let d = runner.world().tank(StageId::S2).dissolved_oxygen;
        if d >= 3.5 {
            return check(aerated, format!("DO 1.0 -> {d:.3} mg/L after {:.0} s, aerator driven by controller", runner.now()));
        }
    }
    Err(format!("DO {:.3} mg/L after 2 h", runner.world().tank(StageId::S2).dissolved_oxygen))
}

fn s5_timing() -> Outcome {
    let mut cfg = SimConfig::default();
    cfg.pumps.always_aerated.clear();
    let mut tanks = World::default_tanks(&cfg);
    tanks[StageId::S5.index()].volume = 0.0;
    tanks[StageId::S4.index()].volume = 60.0;
    let mut w = World::new(cfg, tanks).map_err(|e| e.to_string())?;
    w.set_water_pump(Route::S5ToS1, false);
    w.set_water_pump(Route::S4ToS5, true);
    let mut fill = 0.0;
    while w.tank(StageId::S5).volume < 20.0 - 1e-9 && fill < 1e4 {
        w.step(1.0).map_err(|e| e.to_string())?;
        fill += 1.0;
    }
    w.set_water_pump(Route::S4ToS5, false);
    w.set_water_pump(Route::S5ToS1, true);
    let mut drain = 0.0;
    while w.tank(StageId::S5).volume > 1e-9 && drain < 1e5 {
        w.step(1.0).map_err(|e| e.to_string())?;
        drain += 1.0;
    }
    check(
        (fill - 120.0f64).abs() <= 6.0 && (drain - 7200.0f64).abs() <= 360.0,
        format!("fill 20 L in {fill} s, drain in {drain} s"),
    )
}

fn volume_conservation() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..10_000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = World::with_default_tanks(SimConfig::default()).map_err(|e| e.to_string())?;
        let start = w.total_volume();
        for _ in 0..200 {
            match rng.gen_range(0..8) {
                0 => w.set_water_pump(Route::ORDER[rng.gen_range(0..6)], rng.gen()),
                1 => w.run_route_for(Route::ORDER[rng.gen_range(0..6)], rng.gen_range(0.0..300.0)),
                2 => w.scheduler_mut().request_cycle(),
                3 => w.set_water_pump_failed(Route::ORDER[rng.gen_range(0..6)], rng.gen_bool(0.2)),
                _ => {}
            }
            w.step(rng.gen_range(0.01..=1.0)).map_err(|e| e.to_string())?;
        }
        worst = worst.max((w.total_volume() - start).abs());
    }
    check(worst < 1e-9, format!("10000 schedules x 200 steps, worst drift {worst:.3e} L"))
}

fn integrity() -> Outcome {
    let keys = KeyTable::derived(9);
    let stage = Broker::default();
    let ctl = Broker::default();
    let mut node = GatewayNode::attach(Gateway::new(keys.clone()), &stage, &ctl).map_err(|e| e.to_string())?;
    let mut sink = ctl.connect("controller", 0).map_err(|e| e.to_string())?;
    sink.subscribe("cypha/+/sensing", QoS::AtMostOnce).map_err(|e| e.to_string())?;
    let edge = stage.connect("stage2-edge", 0).map_err(|e| e.to_string())?;
    let topic = StageId::S2.sensing_topic();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut forwarded_corrupt = 0;
    for i in 0..10_000 {
        let rec = record(2.0 * i as f64, rng.gen_range(5.0..9.0), rng.gen_range(1.0..7.0));
        let mut wire = Envelope::seal(&keys, &topic, &rec.to_json(), "stage2").map_err(|e| e.to_string())?.to_json();
        let bit = rng.gen_range(0..wire.len() * 8);
        wire[bit / 8] ^= 1 << (bit % 8);
        edge.publish(&topic, wire, QoS::AtMostOnce).map_err(|e| e.to_string())?;
        node.pump();
        forwarded_corrupt += sink.drain().len();
    }
    let mut forwarded_honest = 0;
    for i in 0..10_000 {
        let rec = record(2.0 * i as f64, rng.gen_range(5.0..9.0), rng.gen_range(1.0..7.0));
        let wire = Envelope::seal(&keys, &topic, &rec.to_json(), "stage2").map_err(|e| e.to_string())?.to_json();
        edge.publish(&topic, wire, QoS::AtMostOnce).map_err(|e| e.to_string())?;
        node.pump();
        forwarded_honest += sink.drain().len();
    }
    check(
        forwarded_corrupt == 0 && forwarded_honest == 10_000,
        format!("corrupted forwarded {forwarded_corrupt}/10000, honest forwarded {forwarded_honest}/10000"),
    )
}

fn oracle(filter: &[&str], topic: &[&str]) -> bool {
    match (filter.first(), topic.first()) {
        (Some(&"#"), _) => true,
        (None, None) => true,
        (Some(&"+"), Some(_)) => oracle(&filter[1..], &topic[1..]),
        (Some(f), Some(t)) if f == t => oracle(&filter[1..], &topic[1..]),
        _ => false,
    }
}

fn broker_conformance() -> Outcome {
    let words = ["a", "b", "cypha", "stage2", "sensing", "+"];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mismatches = 0;
    for _ in 0..10_000 {
        let mut f: Vec<&str> = (0..rng.gen_range(0..5)).map(|_| words[rng.gen_range(0..words.len())]).collect();
        if f.is_empty() || rng.gen_bool(0.3) {
            f.push("#");
        }
        let t: Vec<&str> = (0..rng.gen_range(1..6)).map(|_| words[rng.gen_range(0..words.len() - 1)]).collect();
        let filter = TopicFilter::new(&f.join("/")).map_err(|e| e.to_string())?;
        let topic = Topic::new(&t.join("/")).map_err(|e| e.to_string())?;
        if matches(&filter, &topic) != oracle(&f, &t) {
            mismatches += 1;
        }
    }

    let broker = Broker::default();
    let mut sub = broker.connect("sub", 0).map_err(|e| e.to_string())?;
    sub.subscribe("cypha/+/sensing", QoS::AtLeastOnce).map_err(|e| e.to_string())?;
    let handles: Vec<_> = (1..=4)
        .map(|i| {
            let s = broker.connect(&format!("pub{i}"), 0).unwrap();
            thread::spawn(move || {
                for n in 0..2000u32 {
                    s.publish(&format!("cypha/stage{i}/sensing"), n.to_be_bytes().to_vec(), QoS::AtLeastOnce).unwrap();
                }
            })
        })
        .collect();
    for h in handles {
        h.join().map_err(|_| "publisher panicked")?;
    }
    let mut per_pub: BTreeMap<String, Vec<u32>> = BTreeMap::new();
    for d in sub.drain() {
        per_pub.entry(d.publisher.to_string()).or_default().push(u32::from_be_bytes(d.payload[..4].try_into().unwrap()));
    }
    let fifo = per_pub.len() == 4 && per_pub.values().all(|v| *v == (0..2000).collect::<Vec<_>>());

    let lossy = Broker::default();
    lossy.set_loss(Some(LossModel::new(0.2, 42)));
    let mut rx = lossy.connect("controller", 0).map_err(|e| e.to_string())?;
    rx.subscribe("cypha/stage2/actuating", QoS::AtLeastOnce).map_err(|e| e.to_string())?;
    let tx = lossy.connect("hmi", 0).map_err(|e| e.to_string())?;
    for n in 0..1000u32 {
        tx.publish("cypha/stage2/actuating", n.to_be_bytes().to_vec(), QoS::AtLeastOnce).map_err(|e| e.to_string())?;
    }
    let mut got = std::collections::BTreeSet::new();
    let mut t = 0.0;
    while t < 200.0 {
        for d in rx.drain() {
            got.insert(u32::from_be_bytes(d.payload[..4].try_into().unwrap()));
        }
        if lossy.inflight_count() == 0 {
            break;
        }
        t += 1.0;
        lossy.tick(t);
    }
    let lost = lossy.stats().lost;
    check(
        mismatches == 0 && fifo && got.len() == 1000,
        format!(
            "wildcard {mismatches}/10000 mismatches; FIFO across 4x2000 concurrent publishes {}; QoS1 delivered {}/1000 with {lost} injected drops",
            if fifo { "held" } else { "broken" },
            got.len()
        ),
    )
}

const FAULTY: &str = r#"
[sim]
duration_hours = 6
seed = 77

[[events]]
at = 600
kind = "manual"
ap = 1
note = "check aerator"

[[events]]
at = 1800
kind = "fault"
fault = "bus_loss"
prob = 0.2
window = 900

[[events]]
at = 3600
kind = "fault"
fault = "sensor_drift"
stage = "S2"
param = "ph"
rate = -0.5
window = 3600

[[events]]
at = 9000
kind = "fault"
fault = "pump_failure"
stage = "S2"
pump = "aeration"
window = 1200

[[events]]
at = 12000
kind = "fault"
fault = "bus_outage"
bus = "stage"
window = 60

[[events]]
at = 15000
kind = "intake"
liters = 10
"#;

fn determinism(a: &Path, b: &Path) -> Result<(Outcome, Vec<std::path::PathBuf>), String> {
    let mut csvs = Vec::new();
    for dir in [a, b] {
        let sc = Scenario::from_toml_str(FAULTY).map_err(|e| e.to_string())?;
        let (out, _) = run_scenario(sc, KeyTable::derived(77), dir).map_err(|e| e.to_string())?;
        csvs.push(out.csv);
    }
    let x = std::fs::read(&csvs[0]).map_err(|e| e.to_string())?;
    let y = std::fs::read(&csvs[1]).map_err(|e| e.to_string())?;
    Ok((check(x == y && !x.is_empty(), format!("6 h faulty scenario twice: {} vs {} bytes, identical={}", x.len(), y.len(), x == y)), csvs))
}

fn replay(logs: &[(std::path::PathBuf, ControllerConfig)]) -> Outcome {
    let mut rows = 0;
    let mut mismatches = 0;
    for (path, cfg) in logs {
        let f = std::fs::File::open(path).map_err(|e| e.to_string())?;
        let r = replay_csv(f, cfg).map_err(|e| e.to_string())?;
        rows += r.rows;
        mismatches += r.mismatches.len();
    }
    check(mismatches == 0 && rows > 0, format!("{} logs, {rows} rows, {mismatches} actuator mismatches", logs.len()))
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(o) => o,
        Err(p) => Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    }
}

fn main() {
    let root = tempfile::tempdir().unwrap();
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    results.push(("fsm truth table", guarded(fsm_table)));
    results.push(("threshold behaviour", guarded(threshold_behaviour)));
    let long = long_run(&root.path().join("72h"));
    results.push(("72 h run", guarded(|| seventy_two_hours(long.as_ref().map_err(Clone::clone)?))));
    results.push(("DO recovery", guarded(|| do_recovery(&root.path().join("do")))));
    results.push(("S5 timing", guarded(s5_timing)));
    results.push(("volume conservation", guarded(volume_conservation)));
    results.push(("integrity fuzz", guarded(integrity)));
    results.push(("broker conformance", guarded(broker_conformance)));
    let det = determinism(&root.path().join("a"), &root.path().join("b"));
    let mut logs = Vec::new();
    if let Ok(l) = &long {
        logs.push((l.csv.clone(), l.cfg));
    }
    results.push((
        "end-to-end determinism",
        match det {
            Ok((o, csvs)) => {
                logs.push((csvs[0].clone(), ControllerConfig::default()));
                o
            }
            Err(e) => Err(e),
        },
    ));
    results.push(("replay self-consistency", guarded(|| replay(&logs))));

    let mut failed = 0;
    for (name, r) in &results {
        match r {
            Ok(d) => println!("PASS {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL {name}: {d}");
            }
        }
    }
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
