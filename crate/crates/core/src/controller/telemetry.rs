use crate::edge::SensorRecord;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TelemetryError {
    #[error("missing field `{0}`")]
    MissingField(&'static str),
    #[error("`{field}` = {value} is outside its physical range")]
    OutOfPhysicalRange { field: &'static str, value: f64 },
    #[error("malformed telemetry: {0}")]
    MalformedJson(String),
}

const FIELDS: [&str; 10] = ["ts", "stage", "ph", "tds", "do", "water_temp", "air_temp", "humidity", "wp", "ap"];

/// Parses one telemetry payload and checks physical bounds.
pub fn parse_telemetry(bytes: &[u8]) -> Result<SensorRecord, TelemetryError> {
    let value: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| TelemetryError::MalformedJson(e.to_string()))?;
    let Some(obj) = value.as_object() else {
        return Err(TelemetryError::MalformedJson("expected a JSON object".into()));
    };
    if let Some(missing) = FIELDS.iter().find(|f| !obj.contains_key(**f)) {
        return Err(TelemetryError::MissingField(missing));
    }
    let rec: SensorRecord =
        serde_json::from_value(value).map_err(|e| TelemetryError::MalformedJson(e.to_string()))?;
    if !rec.ts.is_finite() || rec.ts < 0.0 {
        return Err(TelemetryError::OutOfPhysicalRange { field: "ts", value: rec.ts });
    }
    if let Some((channel, value)) = rec.out_of_range() {
        return Err(TelemetryError::OutOfPhysicalRange { field: channel.as_str(), value });
    }
    Ok(rec)
}
