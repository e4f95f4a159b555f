use std::collections::BTreeMap;
use std::fmt;

use sha2::{Digest, Sha256};

use crate::StageId;

pub const KEY_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KeyError {
    #[error("key table is empty")]
    Empty,
    #[error("key `{0}` is not 64 hex digits")]
    BadSecret(String),
    #[error("invalid key file: {0}")]
    Parse(String),
}

/// `key_id → 32-byte shared secret`. Secrets never appear in `Debug`.
#[derive(Clone, PartialEq, Eq)]
pub struct KeyTable {
    keys: BTreeMap<String, [u8; KEY_LEN]>,
}

impl fmt::Debug for KeyTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyTable").field("key_ids", &self.keys.keys().collect::<Vec<_>>()).finish()
    }
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct KeyFile {
    keys: BTreeMap<String, String>,
}

impl KeyTable {
    pub fn new(keys: BTreeMap<String, [u8; KEY_LEN]>) -> Result<Self, KeyError> {
        if keys.is_empty() {
            return Err(KeyError::Empty);
        }
        Ok(Self { keys })
    }

    /// Parses a key file:
    ///
    /// ```toml
    /// [keys]
    /// stage2 = "00112233…"   # 64 hex digits
    /// ```
    pub fn from_toml_str(s: &str) -> Result<Self, KeyError> {
        let file: KeyFile = toml::from_str(s).map_err(|e| KeyError::Parse(e.message().to_owned()))?;
        let mut keys = BTreeMap::new();
        for (id, hex_secret) in file.keys {
            let mut secret = [0u8; KEY_LEN];
            hex::decode_to_slice(hex_secret.trim(), &mut secret).map_err(|_| KeyError::BadSecret(id.clone()))?;
            keys.insert(id, secret);
        }
        Self::new(keys)
    }

    /// Well-known ids used by the testbed.
    pub fn device_ids() -> Vec<String> {
        let mut ids: Vec<String> = StageId::ALL.iter().map(|s| s.key_id()).collect();
        ids.push("controller".into());
        ids.push("hmi".into());
        ids
    }

    /// Deterministic per-device keys derived from `seed`, for simulation runs.
    pub fn derived(seed: u64) -> Self {
        let keys = Self::device_ids()
            .into_iter()
            .map(|id| {
                let mut h = Sha256::new();
                h.update(b"cypha-dev-key\0");
                h.update(seed.to_le_bytes());
                h.update(id.as_bytes());
                (id, h.finalize().into())
            })
            .collect();
        Self { keys }
    }

    pub fn get(&self, key_id: &str) -> Option<&[u8; KEY_LEN]> {
        self.keys.get(key_id)
    }

    pub fn contains(&self, key_id: &str) -> bool {
        self.keys.contains_key(key_id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.keys.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Serializes back to the key-file format.
    pub fn to_toml_string(&self) -> String {
        let mut out = String::from("[keys]\n");
        for (id, k) in &self.keys {
            out.push_str(&format!("{id} = \"{}\"\n", hex::encode(k)));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_redact() {
        let t = KeyTable::from_toml_str(&format!("[keys]\nstage2 = \"{}\"\n", "ab".repeat(32))).unwrap();
        assert_eq!(t.get("stage2").unwrap(), &[0xab; 32]);
        let dbg = format!("{t:?}");
        assert!(dbg.contains("stage2") && !dbg.contains("abab"));
        assert_eq!(KeyTable::from_toml_str(&t.to_toml_string()).unwrap(), t);
    }

    #[test]
    fn rejects_bad_files() {
        assert_eq!(KeyTable::from_toml_str("[keys]\n"), Err(KeyError::Empty));
        assert_eq!(KeyTable::from_toml_str("[keys]\nx = \"abcd\"\n"), Err(KeyError::BadSecret("x".into())));
        assert!(matches!(KeyTable::from_toml_str("keys = 1"), Err(KeyError::Parse(_))));
    }

    #[test]
    fn derived_keys_are_distinct_and_stable() {
        let a = KeyTable::derived(1);
        assert_eq!(a, KeyTable::derived(1));
        assert_ne!(a.get("stage2"), KeyTable::derived(2).get("stage2"));
        assert_ne!(a.get("stage2"), a.get("stage3"));
        assert_eq!(a.len(), 7);
    }
}
