use std::collections::BTreeMap;

use cypha_core::actuation::ManualRequest;
use cypha_core::bus::Delivery;
use cypha_core::controller::{ControllerStatus, STATUS_TOPIC};
use cypha_core::edge::{update_alert, AlertState, AlertThresholds, SensorRecord};
use cypha_core::gateway::{open, KeyTable};
use cypha_core::StageId;
use serde::Deserialize;
use serde_json::{json, Value};

/// Turns controller-bus traffic into WebSocket frames.
pub struct Bridge {
    keys: KeyTable,
    thresholds: AlertThresholds,
    alerts: BTreeMap<StageId, AlertState>,
}

impl Bridge {
    pub fn new(keys: KeyTable, thresholds: AlertThresholds) -> Self {
        Self { keys, thresholds, alerts: BTreeMap::new() }
    }

    /// Frames for one delivery. Sensing always yields a `sensing` frame and
    /// an `alert` frame when that stage's LED state changes.
    pub fn translate(&mut self, d: &Delivery) -> Vec<Value> {
        let topic = d.topic.as_str();
        if topic == STATUS_TOPIC {
            return match serde_json::from_slice::<ControllerStatus>(&d.payload) {
                Ok(s) => vec![frame("status", &s, None)],
                Err(_) => Vec::new(),
            };
        }
        if !topic.ends_with("/sensing") {
            return Vec::new();
        }
        let Ok(env) = open(&self.keys, topic, &d.payload) else {
            return Vec::new();
        };
        let Ok(rec) = serde_json::from_slice::<SensorRecord>(&env.payload) else {
            return Vec::new();
        };
        let envelope = json!({ "key_id": env.key_id, "mac": hex_mac(&env.mac) });
        let mut out = vec![frame("sensing", &rec, Some(envelope))];
        let alert = update_alert(&rec, &self.thresholds);
        if self.alerts.get(&rec.stage) != Some(&alert) {
            out.push(json!({
                "type": "alert",
                "stage": rec.stage,
                "ts": rec.ts,
                "led": alert.led,
                "violated": alert.violated,
            }));
            self.alerts.insert(rec.stage, alert);
        }
        out
    }
}

fn hex_mac(mac: &[u8]) -> String {
    mac.iter().map(|b| format!("{b:02x}")).collect()
}

fn frame(kind: &str, body: &impl serde::Serialize, envelope: Option<Value>) -> Value {
    let mut v = serde_json::to_value(body).expect("plain struct serializes");
    if let Value::Object(m) = &mut v {
        m.insert("type".into(), Value::from(kind));
        if let Some(e) = envelope {
            m.insert("envelope".into(), e);
        }
    }
    v
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ManualFrame {
    #[serde(rename = "type")]
    kind: String,
    wp: Option<u8>,
    ap: Option<u8>,
    #[serde(default)]
    release: bool,
    note: Option<String>,
}

fn bit(field: &str, v: Option<u8>) -> Result<Option<bool>, String> {
    match v {
        None => Ok(None),
        Some(0) => Ok(Some(false)),
        Some(1) => Ok(Some(true)),
        Some(n) => Err(format!("`{field}` must be 0 or 1, got {n}")),
    }
}

/// Parses `{"type":"manual","wp":..,"ap":..}` from a client.
pub fn parse_manual(text: &str, ts: f64) -> Result<ManualRequest, String> {
    let f: ManualFrame = serde_json::from_str(text).map_err(|e| e.to_string())?;
    if f.kind != "manual" {
        return Err(format!("unsupported frame type `{}`", f.kind));
    }
    let (wp, ap) = (bit("wp", f.wp)?, bit("ap", f.ap)?);
    if wp.is_none() && ap.is_none() && !f.release {
        return Err("manual frame sets neither `wp` nor `ap`".into());
    }
    Ok(ManualRequest { ts: Some(ts), wp, ap, release: f.release, source: None, operator_note: f.note })
}
