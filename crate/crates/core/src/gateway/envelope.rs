use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use hmac::{Hmac, Mac};
use serde::{Deserialize, Serialize};
use sha2::Sha256;

use super::keys::KeyTable;

type HmacSha256 = Hmac<Sha256>;

pub const TAG_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IntegrityError {
    #[error("authentication tag mismatch")]
    BadTag,
    #[error("unknown key id `{0}`")]
    UnknownKey(String),
    #[error("malformed envelope: {0}")]
    Malformed(String),
}

/// A payload bound to its topic by a keyed tag.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Envelope {
    pub topic: String,
    pub payload: Vec<u8>,
    pub mac: [u8; TAG_LEN],
    pub key_id: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Wire<'a> {
    topic: std::borrow::Cow<'a, str>,
    payload: String,
    mac: String,
    key_id: std::borrow::Cow<'a, str>,
}

fn tag(key: &[u8], topic: &str, payload: &[u8]) -> HmacSha256 {
    let mut mac = HmacSha256::new_from_slice(key).expect("HMAC accepts any key length");
    mac.update(topic.as_bytes());
    // Separator keeps (topic, payload) splits unambiguous; topics cannot contain NUL.
    mac.update(&[0]);
    mac.update(payload);
    mac
}

impl Envelope {
    pub fn seal(keys: &KeyTable, topic: &str, payload: &[u8], key_id: &str) -> Result<Self, IntegrityError> {
        let key = keys.get(key_id).ok_or_else(|| IntegrityError::UnknownKey(key_id.to_owned()))?;
        let mac = tag(key, topic, payload).finalize().into_bytes().into();
        Ok(Self { topic: topic.to_owned(), payload: payload.to_vec(), mac, key_id: key_id.to_owned() })
    }

    /// Checks the tag in constant time and returns the payload.
    pub fn verify<'a>(&'a self, keys: &KeyTable) -> Result<&'a [u8], IntegrityError> {
        let key = keys.get(&self.key_id).ok_or_else(|| IntegrityError::UnknownKey(self.key_id.clone()))?;
        tag(key, &self.topic, &self.payload).verify_slice(&self.mac).map_err(|_| IntegrityError::BadTag)?;
        Ok(&self.payload)
    }

    pub fn to_json(&self) -> Vec<u8> {
        let wire = Wire {
            topic: self.topic.as_str().into(),
            payload: BASE64.encode(&self.payload),
            mac: hex::encode(self.mac),
            key_id: self.key_id.as_str().into(),
        };
        serde_json::to_vec(&wire).expect("plain struct serializes")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, IntegrityError> {
        let wire: Wire<'_> = serde_json::from_slice(bytes).map_err(|e| IntegrityError::Malformed(e.to_string()))?;
        let payload = BASE64.decode(wire.payload.as_bytes()).map_err(|e| IntegrityError::Malformed(e.to_string()))?;
        let mut mac = [0u8; TAG_LEN];
        hex::decode_to_slice(&wire.mac, &mut mac).map_err(|e| IntegrityError::Malformed(format!("mac: {e}")))?;
        // Only the canonical spelling is accepted, so every wire byte is covered.
        if wire.mac != hex::encode(mac) || wire.payload != BASE64.encode(&payload) {
            return Err(IntegrityError::Malformed("non-canonical encoding".into()));
        }
        Ok(Self { topic: wire.topic.into_owned(), payload, mac, key_id: wire.key_id.into_owned() })
    }
}

/// Parses and verifies a wire envelope received on `topic`.
pub fn open(keys: &KeyTable, topic: &str, bytes: &[u8]) -> Result<Envelope, IntegrityError> {
    let env = Envelope::from_json(bytes)?;
    if crate::bus::canonicalize(&env.topic) != crate::bus::canonicalize(topic) {
        return Err(IntegrityError::Malformed(format!("envelope topic `{}` differs from `{topic}`", env.topic)));
    }
    env.verify(keys)?;
    Ok(env)
}
