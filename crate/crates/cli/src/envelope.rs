use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Result;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::RunConfig;

pub const ENVELOPE_SCHEMA: &str = "hamcycle-envelope/1";

/// Everything one command emits. `payload` is a pure function of `config`;
/// wall-clock numbers live in `timings`.
#[derive(Debug, Serialize, Deserialize)]
pub struct ResultEnvelope {
    pub schema: String,
    pub version: String,
    /// Library module that produced the payload.
    pub module: String,
    pub config: RunConfig,
    pub payload: Value,
    pub timings: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

impl ResultEnvelope {
    pub fn new(module: &str, config: RunConfig) -> Self {
        Self {
            schema: ENVELOPE_SCHEMA.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            module: module.into(),
            config,
            payload: Value::Null,
            timings: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        hamcycle::io::write_atomic(path, text.as_bytes())?;
        Ok(())
    }
}

/// Appends CSV rows to `path`, writing `header` first when the file is new.
/// The whole file is rewritten atomically.
pub fn append_csv(path: &Path, header: &str, rows: &str) -> Result<()> {
    let mut text = match std::fs::read_to_string(path) {
        Ok(t) => {
            let first = t.lines().next().unwrap_or_default();
            let want = header.lines().next().unwrap_or_default();
            if first != want {
                anyhow::bail!(
                    "{} has header {first:?}, expected {want:?}",
                    path.display()
                );
            }
            t
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => header.to_string(),
        Err(e) => return Err(e.into()),
    };
    text.push_str(rows);
    hamcycle::io::write_atomic(path, text.as_bytes())?;
    Ok(())
}
