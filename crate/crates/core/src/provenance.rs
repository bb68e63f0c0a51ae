//! Provenance envelopes: every emitted artifact carries the resolved run
//! configuration and a SHA-256 of its own content.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub config: Value,
    /// Hex SHA-256 of the compact JSON (or raw bytes) of the artifact.
    pub content_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub provenance: Provenance,
    pub artifact: Value,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl Provenance {
    pub fn new<C: Serialize>(config: &C, content: &[u8]) -> Result<Self> {
        Ok(Self {
            tool: "tempdens".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: serde_json::to_value(config)?,
            content_sha256: sha256_hex(content),
        })
    }
}

impl Envelope {
    pub fn wrap<C: Serialize>(config: &C, artifact: Value) -> Result<Self> {
        let compact = serde_json::to_vec(&artifact)?;
        Ok(Self {
            provenance: Provenance::new(config, &compact)?,
            artifact,
        })
    }

    /// Whether the stored hash matches the artifact.
    pub fn verify(&self) -> Result<bool> {
        Ok(sha256_hex(&serde_json::to_vec(&self.artifact)?) == self.provenance.content_sha256)
    }
}

/// The artifact inside an envelope, or the document itself when unwrapped.
pub fn unwrap_artifact(text: &str) -> Result<Value> {
    let mut v: Value = serde_json::from_str(text)?;
    if let Value::Object(map) = &mut v {
        if map.contains_key("provenance") {
            if let Some(a) = map.remove("artifact") {
                return Ok(a);
            }
        }
    }
    Ok(v)
}
