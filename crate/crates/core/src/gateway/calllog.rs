use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{Generation, GatewayError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallLogEntry {
    pub timestamp: String,
    pub kind: String,
    pub model_id: String,
    pub provider: String,
    pub model_version: Option<String>,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub latency: f64,
    pub attempts: u32,
    pub error: Option<String>,
}

impl CallLogEntry {
    fn now() -> String {
        chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
    }

    pub fn for_generation(
        model_id: &str,
        provider: &str,
        result: &Result<Generation, GatewayError>,
        latency: f64,
        attempts: u32,
    ) -> Self {
        let (version, tin, tout, error) = match result {
            Ok(g) => (Some(g.model_version_reported.clone()), g.tokens_in, g.tokens_out, None),
            Err(e) => (None, 0, 0, Some(e.to_string())),
        };
        Self {
            timestamp: Self::now(),
            kind: "generate".into(),
            model_id: model_id.into(),
            provider: provider.into(),
            model_version: version,
            tokens_in: tin,
            tokens_out: tout,
            latency,
            attempts,
            error,
        }
    }

    pub fn for_embedding(
        model_id: &str,
        provider: &str,
        tokens_in: u64,
        error: Option<&GatewayError>,
        latency: f64,
        attempts: u32,
    ) -> Self {
        Self {
            timestamp: Self::now(),
            kind: "embed".into(),
            model_id: model_id.into(),
            provider: provider.into(),
            model_version: None,
            tokens_in,
            tokens_out: 0,
            latency,
            attempts,
            error: error.map(ToString::to_string),
        }
    }
}

/// Append-only JSONL record of every provider call.
pub struct CallLog {
    out: Mutex<BufWriter<File>>,
}

impl CallLog {
    pub fn open(path: &Path) -> std::io::Result<Self> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { out: Mutex::new(BufWriter::new(file)) })
    }

    pub fn append(&self, entry: &CallLogEntry) {
        let line = serde_json::to_string(entry).expect("call log entry serializes");
        let mut out = self.out.lock().expect("call log lock");
        if let Err(e) = writeln!(out, "{line}").and_then(|_| out.flush()) {
            tracing::warn!(error = %e, "failed to append to call log");
        }
    }
}
