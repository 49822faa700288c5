//! Schema-versioned JSON envelopes for files written by the pipeline.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

/// Wraps a document with a `schema` name and `schema_version` field.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Versioned<T> {
    pub schema: String,
    pub schema_version: u32,
    #[serde(flatten)]
    pub body: T,
}

impl<T> Versioned<T> {
    pub fn new(schema: &str, body: T) -> Self {
        Versioned { schema: schema.to_string(), schema_version: SCHEMA_VERSION, body }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum VersionError {
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("expected schema `{expected}`, found `{found}`")]
    Schema { expected: String, found: String },
    #[error("unsupported schema version {0}")]
    Version(u32),
}

pub fn to_json<T: Serialize>(schema: &str, body: &T) -> String {
    #[derive(Serialize)]
    struct Env<'a, T> {
        schema: &'a str,
        schema_version: u32,
        #[serde(flatten)]
        body: &'a T,
    }
    let env = Env { schema, schema_version: SCHEMA_VERSION, body };
    serde_json::to_string_pretty(&env).expect("serializable document")
}

/// Parses a versioned document. Bare documents without an envelope are
/// accepted as well.
pub fn from_json<T: DeserializeOwned>(schema: &str, text: &str) -> Result<T, VersionError> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    if let Some(found) = value.get("schema").and_then(|s| s.as_str()) {
        if found != schema {
            return Err(VersionError::Schema { expected: schema.into(), found: found.into() });
        }
        let version = value.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if version != SCHEMA_VERSION {
            return Err(VersionError::Version(version));
        }
        let mut value = value;
        if let Some(obj) = value.as_object_mut() {
            obj.remove("schema");
            obj.remove("schema_version");
        }
        return Ok(serde_json::from_value(value)?);
    }
    Ok(serde_json::from_value(value)?)
}
