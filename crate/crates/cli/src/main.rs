mod bridge;

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use anyhow::{anyhow, bail, Context, Result};
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::{Json, Router};
use clap::{Parser, Subcommand};
use cypha_core::bus::tcp::TcpServer;
use cypha_core::bus::{QoS, SessionHandle};
use cypha_core::controller::ControllerConfig;
use cypha_core::gateway::{Envelope, KeyTable};
use cypha_core::scenario::{replay_csv, Runner, Scenario, Summary};
use cypha_core::StageId;
use log::{info, warn};
use serde_json::{json, Value};
use tokio::sync::{broadcast, oneshot};

use crate::bridge::{parse_manual, Bridge};

#[derive(Parser)]
#[command(name = "cypha", version, about = "Aquaponics cyber-physical testbed")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Scenario TOML file. Without one, a quiet 24 h run is used.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Overrides the scenario's speed factor.
    #[arg(long)]
    speed: Option<f64>,
    /// Overrides the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Key file (`[keys]` table of 64-hex-digit keys). Defaults to keys derived from the seed.
    #[arg(long)]
    keys: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario in virtual time and write log.csv, events.log and summary.json.
    Run {
        #[command(flatten)]
        args: RunArgs,
        /// Pace the run against the wall clock at `speed`x.
        #[arg(long)]
        realtime: bool,
    },
    /// Recompute actuator outputs from a logged CSV and diff them.
    Replay {
        #[arg(long)]
        log: PathBuf,
        /// Scenario whose `[controller]` section set the thresholds.
        #[arg(long, conflicts_with = "config")]
        scenario: Option<PathBuf>,
        /// Bare controller config TOML.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Print the full report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Run a scenario paced in real time with the controller bus on TCP and a WebSocket bridge.
    Serve {
        #[command(flatten)]
        args: RunArgs,
        #[arg(long, default_value_t = 1883)]
        port: u16,
        #[arg(long, default_value_t = 8080)]
        ws_port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
    },
}

fn load(args: &RunArgs, default_duration: f64) -> Result<(Scenario, KeyTable)> {
    let mut sc = match &args.scenario {
        Some(p) => Scenario::from_path(p)?,
        None => Scenario::quiet(default_duration, 1),
    };
    if let Some(s) = args.seed {
        sc.seed = s;
        sc.plant.rng_seed = s;
    }
    if let Some(v) = args.speed {
        if !(v.is_finite() && v >= 1.0) {
            bail!("--speed must be at least 1");
        }
        sc.speed = v;
    }
    let keys = match &args.keys {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            KeyTable::from_toml_str(&text)?
        }
        None => KeyTable::derived(sc.seed),
    };
    Ok((sc, keys))
}

/// Steps the runner, sleeping to hold `speed`x wall time when pacing.
fn drive(runner: &mut Runner, pace: bool, stop: &AtomicBool) -> Result<()> {
    let speed = runner.scenario().speed;
    let start = Instant::now();
    while !runner.is_finished() && !stop.load(Ordering::Relaxed) {
        runner.step()?;
        if pace {
            let due = Duration::from_secs_f64(runner.now() / speed);
            if let Some(wait) = due.checked_sub(start.elapsed()) {
                thread::sleep(wait);
            }
        }
    }
    Ok(())
}

fn report(summary: &Summary, out: &Path) {
    println!(
        "{} s simulated, {} rows, {} CSV bytes, volume drift {:.3e} L",
        summary.duration, summary.rows, summary.csv_bytes, summary.volume.drift
    );
    println!("outputs in {}", out.display());
}

fn run(args: RunArgs, realtime: bool) -> Result<ExitCode> {
    let (sc, keys) = load(&args, 24.0 * 3600.0)?;
    let mut runner = Runner::new(sc, keys, &args.out)?;
    drive(&mut runner, realtime, &AtomicBool::new(false))?;
    let (_, summary) = runner.finish()?;
    report(&summary, &args.out);
    Ok(ExitCode::SUCCESS)
}

fn replay(log: &Path, scenario: Option<&Path>, config: Option<&Path>, as_json: bool) -> Result<ExitCode> {
    let cfg = match (scenario, config) {
        (Some(p), _) => Scenario::from_path(p)?.controller,
        (None, Some(p)) => ControllerConfig::from_toml_str(&fs::read_to_string(p)?)?,
        (None, None) => ControllerConfig::default(),
    };
    let file = fs::File::open(log).with_context(|| format!("opening {}", log.display()))?;
    let r = replay_csv(file, &cfg)?;
    if as_json {
        println!("{}", serde_json::to_string_pretty(&r)?);
    } else {
        for m in &r.mismatches {
            println!("line {}: ts {:.3} logged {} expected {}", m.line, m.timestamp, m.logged, m.expected);
        }
        println!("{} rows, {} mismatches, {} rows outside safe ranges", r.rows, r.mismatches.len(), r.violations.len());
    }
    Ok(if r.mismatches.is_empty() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

#[derive(Clone)]
struct AppState {
    frames: broadcast::Sender<String>,
    hmi: SessionHandle,
    keys: KeyTable,
    config: Value,
    epoch: f64,
    started: Instant,
    speed: f64,
}

async fn config_handler(State(s): State<AppState>) -> impl IntoResponse {
    Json(s.config.clone())
}

async fn ws_handler(ws: WebSocketUpgrade, State(s): State<AppState>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| client(socket, s))
}

fn send_manual(s: &AppState, text: &str) -> Value {
    let ts = s.epoch + s.started.elapsed().as_secs_f64() * s.speed;
    let req = match parse_manual(text, ts) {
        Ok(r) => r,
        Err(e) => return json!({ "type": "error", "message": e }),
    };
    let topic = StageId::S2.manual_topic();
    let sealed = match Envelope::seal(&s.keys, &topic, &req.to_json(), "hmi") {
        Ok(e) => e.to_json(),
        Err(e) => return json!({ "type": "error", "message": e.to_string() }),
    };
    match s.hmi.publish(&topic, sealed, QoS::AtLeastOnce) {
        Ok(_) => json!({ "type": "ack", "wp": req.wp.map(u8::from), "ap": req.ap.map(u8::from), "release": req.release }),
        Err(e) => json!({ "type": "error", "message": e.to_string() }),
    }
}

async fn client(mut socket: WebSocket, s: AppState) {
    let mut frames = s.frames.subscribe();
    loop {
        tokio::select! {
            f = frames.recv() => match f {
                Ok(text) => {
                    if socket.send(Message::Text(text)).await.is_err() {
                        break;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => warn!("websocket client lagged by {n} frames"),
                Err(broadcast::error::RecvError::Closed) => break,
            },
            m = socket.recv() => match m {
                Some(Ok(Message::Text(t))) => {
                    let reply = send_manual(&s, &t);
                    if socket.send(Message::Text(reply.to_string())).await.is_err() {
                        break;
                    }
                }
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => {}
            },
        }
    }
}

fn serve(args: RunArgs, port: u16, ws_port: u16, bind: &str) -> Result<ExitCode> {
    let (sc, keys) = load(&args, 30.0 * 24.0 * 3600.0)?;
    let config = json!({
        "thresholds": sc.controller.thresholds(),
        "manual_expiry": sc.controller.manual_expiry,
        "log_interval": sc.controller.log_interval,
        "sample_period": cypha_core::edge::SAMPLE_PERIOD,
    });
    let (epoch, speed, thresholds) = (sc.epoch, sc.speed, sc.controller.thresholds());
    let mut runner = Runner::new(sc, keys.clone(), &args.out)?;
    let bus = runner.controller_bus().clone();
    let mqtt_addr: SocketAddr = format!("{bind}:{port}").parse()?;
    let tcp = TcpServer::bind(mqtt_addr, bus.clone())?;
    info!("MQTT on {}", tcp.local_addr());

    let (tx, _) = broadcast::channel::<String>(4096);
    let bridge_session = bus.connect("ws-bridge", 0)?;
    bridge_session.subscribe("cypha/#", QoS::AtMostOnce)?;
    let (_bridge_handle, deliveries) = bridge_session.into_parts();
    let frames = tx.clone();
    let mut bridge = Bridge::new(keys.clone(), thresholds);
    thread::spawn(move || {
        for d in deliveries {
            for f in bridge.translate(&d) {
                let _ = frames.send(f.to_string());
            }
        }
    });

    let hmi = bus.connect("hmi-ws", 0)?.into_parts().0;
    let state = AppState { frames: tx, hmi, keys, config, epoch, started: Instant::now(), speed };
    let stop = Arc::new(AtomicBool::new(false));
    let stop_runner = stop.clone();
    let sim = thread::spawn(move || -> Result<Summary> {
        drive(&mut runner, true, &stop_runner)?;
        Ok(runner.finish()?.1)
    });

    let rt = tokio::runtime::Runtime::new()?;
    let ws_addr: SocketAddr = format!("{bind}:{ws_port}").parse()?;
    let summary = rt.block_on(async {
        let app = Router::new()
            .route("/ws", get(ws_handler))
            .route("/config", get(config_handler))
            .with_state(state);
        let listener = tokio::net::TcpListener::bind(ws_addr).await?;
        info!("WebSocket bridge on http://{ws_addr}/ws");
        let (done_tx, done_rx) = oneshot::channel::<()>();
        let joined = tokio::task::spawn_blocking(move || {
            let r = sim.join();
            let _ = done_tx.send(());
            r
        });
        let shutdown = async move {
            tokio::select! {
                _ = tokio::signal::ctrl_c() => stop.store(true, Ordering::Relaxed),
                _ = done_rx => {}
            }
        };
        axum::serve(listener, app).with_graceful_shutdown(shutdown).await?;
        joined.await?.map_err(|_| anyhow!("simulation thread panicked"))?
    })?;
    drop(tcp);
    report(&summary, &args.out);
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { args, realtime } => run(args, realtime),
        Command::Replay { log, scenario, config, json } => replay(&log, scenario.as_deref(), config.as_deref(), json),
        Command::Serve { args, port, ws_port, bind } => serve(args, port, ws_port, &bind),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
