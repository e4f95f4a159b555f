//! Actuator commands shared by the edge agents and the controller.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Serde adapter for relay bits carried as JSON `0|1`.
pub mod bit {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(serde::de::Error::custom(format!("expected 0 or 1, got {other}"))),
        }
    }

    pub mod option {
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(v: &Option<bool>, s: S) -> Result<S::Ok, S::Error> {
            match v {
                Some(b) => s.serialize_some(&u8::from(*b)),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<bool>, D::Error> {
            match Option::<u8>::deserialize(d)? {
                None => Ok(None),
                Some(0) => Ok(Some(false)),
                Some(1) => Ok(Some(true)),
                Some(other) => Err(serde::de::Error::custom(format!("expected 0 or 1, got {other}"))),
            }
        }
    }
}

/// Water-pump / aeration-pump relay pair.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Output {
    #[serde(with = "bit")]
    pub wp: bool,
    #[serde(with = "bit")]
    pub ap: bool,
}

impl Output {
    pub const fn new(wp: bool, ap: bool) -> Self {
        Self { wp, ap }
    }
}

/// Renders as the two-bit code, water pump first: `"10"`.
impl fmt::Display for Output {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", u8::from(self.wp), u8::from(self.ap))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandSource {
    Controller,
    Manual,
}

/// Payload on `cypha/stage{N}/actuating`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActuatorCommand {
    pub ts: f64,
    #[serde(with = "bit")]
    pub wp: bool,
    #[serde(with = "bit")]
    pub ap: bool,
    pub source: CommandSource,
}

impl ActuatorCommand {
    pub fn output(&self) -> Output {
        Output::new(self.wp, self.ap)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, serde_json::Error> {
        serde_json::from_slice(bytes)
    }

    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("plain struct serializes")
    }
}

/// Payload on `cypha/stage{N}/manual`. Absent fields leave that relay
/// to the controller; `release` ends the latch early.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ManualRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ts: Option<f64>,
    #[serde(default, with = "bit::option", skip_serializing_if = "Option::is_none")]
    pub wp: Option<bool>,
    #[serde(default, with = "bit::option", skip_serializing_if = "Option::is_none")]
    pub ap: Option<bool>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub release: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<CommandSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator_note: Option<String>,
}

impl ManualRequest {
    pub fn from_json(bytes: &[u8]) -> Result<Self, serde_json::Error> {
        serde_json::from_slice(bytes)
    }

    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("plain struct serializes")
    }
}

/// Default manual latch duration, simulated seconds.
pub const DEFAULT_MANUAL_EXPIRY: f64 = 600.0;

/// An operator override, active until `expires_at`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ManualLatch {
    pub wp: Option<bool>,
    pub ap: Option<bool>,
    pub set_at: f64,
    pub expires_at: f64,
}

impl ManualLatch {
    pub fn is_active(&self, now: f64) -> bool {
        now < self.expires_at
    }

    /// Applies `req` received at `now`. Returns the new latch, or `None`
    /// when the request releases or sets nothing.
    pub fn from_request(req: &ManualRequest, now: f64, expiry: f64) -> Option<Self> {
        if req.release || (req.wp.is_none() && req.ap.is_none()) {
            return None;
        }
        Some(Self { wp: req.wp, ap: req.ap, set_at: now, expires_at: now + expiry })
    }
}

/// Manual fields override automatic ones while the latch is active.
pub fn merge_manual(auto: Output, manual: Option<&ManualLatch>, now: f64) -> Output {
    match manual {
        Some(m) if m.is_active(now) => Output { wp: m.wp.unwrap_or(auto.wp), ap: m.ap.unwrap_or(auto.ap) },
        _ => auto,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn latch(wp: Option<bool>, ap: Option<bool>) -> ManualLatch {
        ManualLatch { wp, ap, set_at: 0.0, expires_at: 600.0 }
    }

    #[test]
    fn merge_examples() {
        let full = latch(Some(true), Some(true));
        assert_eq!(merge_manual(Output::new(false, false), Some(&full), 10.0), Output::new(true, true));
        assert_eq!(merge_manual(Output::new(true, false), None, 10.0), Output::new(true, false));
        assert_eq!(merge_manual(Output::new(true, false), Some(&full), 600.0), Output::new(true, false));
        let ap_only = latch(None, Some(true));
        assert_eq!(merge_manual(Output::new(true, false), Some(&ap_only), 1.0), Output::new(true, true));
    }

    #[test]
    fn command_json_shape() {
        let c = ActuatorCommand { ts: 12.5, wp: true, ap: false, source: CommandSource::Controller };
        assert_eq!(String::from_utf8(c.to_json()).unwrap(), r#"{"ts":12.5,"wp":1,"ap":0,"source":"controller"}"#);
        assert_eq!(ActuatorCommand::from_json(&c.to_json()).unwrap(), c);
        assert!(ActuatorCommand::from_json(br#"{"ts":1,"wp":2,"ap":0,"source":"manual"}"#).is_err());
        assert!(ActuatorCommand::from_json(br#"{"ts":1,"wp":1,"source":"manual"}"#).is_err());
    }

    #[test]
    fn manual_request_partial() {
        let r = ManualRequest::from_json(br#"{"ap":1}"#).unwrap();
        assert_eq!((r.wp, r.ap), (None, Some(true)));
        let l = ManualLatch::from_request(&r, 100.0, DEFAULT_MANUAL_EXPIRY).unwrap();
        assert!(l.is_active(699.9));
        assert!(!l.is_active(700.0));
        assert!(ManualLatch::from_request(&ManualRequest { release: true, ..r }, 0.0, 600.0).is_none());
        assert_eq!(String::from_utf8(ManualRequest { wp: Some(false), ..Default::default() }.to_json()).unwrap(), r#"{"wp":0}"#);
    }

    #[test]
    fn output_display() {
        assert_eq!(Output::new(true, false).to_string(), "10");
        assert_eq!(Output::new(false, true).to_string(), "01");
    }

    proptest! {
        #[test]
        fn active_full_manual_wins(auto_wp: bool, auto_ap: bool, wp: bool, ap: bool, now in 0.0..599.9f64) {
            let m = latch(Some(wp), Some(ap));
            prop_assert_eq!(merge_manual(Output::new(auto_wp, auto_ap), Some(&m), now), Output::new(wp, ap));
        }
    }
}
