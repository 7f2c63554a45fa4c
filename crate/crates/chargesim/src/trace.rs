//! Timestamped run records. Every signal change, state transition, and
//! verdict in a simulation appends exactly one record; serialized as JSONL
//! (one JSON object per line) they form the run's trace.
//!
//! Record data uses a sorted-key map and `serde_json`'s shortest float
//! form, so identical runs serialize to identical bytes.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceSource {
    Ev,
    Evse,
    Attacker,
    Bms,
    Countermeasure,
}

impl fmt::Display for TraceSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TraceSource::Ev => "ev",
            TraceSource::Evse => "evse",
            TraceSource::Attacker => "attacker",
            TraceSource::Bms => "bms",
            TraceSource::Countermeasure => "countermeasure",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t_ms: u64,
    pub source: TraceSource,
    pub kind: String,
    pub data: BTreeMap<String, serde_json::Value>,
}

impl TraceRecord {
    pub fn new(t_ms: u64, source: TraceSource, kind: &str) -> Self {
        TraceRecord {
            t_ms,
            source,
            kind: kind.to_string(),
            data: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.data.insert(key.to_string(), value.into());
        self
    }
}

/// Serializes records as JSONL, one record per line.
pub fn to_jsonl(records: &[TraceRecord]) -> String {
    let mut out = String::new();
    for record in records {
        // TraceRecord serialization cannot fail.
        out.push_str(&serde_json::to_string(record).unwrap());
        out.push('\n');
    }
    out
}

/// Parses a JSONL trace back into records, for fixture checks.
pub fn from_jsonl(text: &str) -> Result<Vec<TraceRecord>, serde_json::Error> {
    text.lines().map(serde_json::from_str).collect()
}
