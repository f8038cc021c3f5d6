//! JSONL conversation transcripts.
//!
//! One JSON object per line:
//!
//! | field        | type              | notes                                  |
//! |--------------|-------------------|----------------------------------------|
//! | `session_id` | string            | required                               |
//! | `producer`   | string            | `user`, `agent`/`assistant`, `system`  |
//! | `timestamp`  | RFC 3339 string   | non-decreasing within a session        |
//! | `content`    | string            | non-empty                              |
//! | `metadata`   | object of strings | optional                               |
//!
//! Blank lines are ignored. Line numbers in errors are 1-based.

use std::collections::HashMap;
use std::str::FromStr;

use mnemo_core::types::{MemoryScope, Metadata, Producer, Timestamp};
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptLine {
    pub session_id: String,
    #[serde(deserialize_with = "producer_alias")]
    pub producer: Producer,
    pub timestamp: Timestamp,
    pub content: String,
    #[serde(default, skip_serializing_if = "Metadata::is_empty")]
    pub metadata: Metadata,
}

fn producer_alias<'de, D: Deserializer<'de>>(d: D) -> Result<Producer, D::Error> {
    let raw = String::deserialize(d)?;
    Producer::from_str(&raw).map_err(serde::de::Error::custom)
}

/// The scope fields shared by every session of a replay.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScopeTemplate {
    pub org_id: String,
    pub project_id: String,
    pub user_id: String,
    pub agent_id: String,
}

impl Default for ScopeTemplate {
    fn default() -> Self {
        Self {
            org_id: "bench".into(),
            project_id: "bench".into(),
            user_id: "user".into(),
            agent_id: "agent".into(),
        }
    }
}

impl ScopeTemplate {
    pub fn scope(&self, session_id: &str) -> MemoryScope {
        MemoryScope::new(&self.org_id, &self.project_id, &self.user_id, &self.agent_id, session_id)
    }
}

/// A parsed line with its 1-based line number.
#[derive(Debug, Clone, PartialEq)]
pub struct NumberedLine {
    pub line: usize,
    pub entry: TranscriptLine,
}

pub fn parse_transcript(text: &str) -> Result<Vec<NumberedLine>, HarnessError> {
    let mut out = Vec::new();
    let mut last: HashMap<String, Timestamp> = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let entry: TranscriptLine = serde_json::from_str(raw).map_err(|e| HarnessError::Parse {
            line,
            message: e.to_string(),
        })?;
        if entry.session_id.trim().is_empty() {
            return Err(HarnessError::Parse {
                line,
                message: "session_id is empty".into(),
            });
        }
        if entry.content.trim().is_empty() {
            return Err(HarnessError::Parse {
                line,
                message: "content is empty".into(),
            });
        }
        if let Some(prev) = last.get(&entry.session_id) {
            if entry.timestamp < *prev {
                return Err(HarnessError::Parse {
                    line,
                    message: format!(
                        "timestamp {} precedes {} earlier in session `{}`",
                        entry.timestamp, prev, entry.session_id
                    ),
                });
            }
        }
        last.insert(entry.session_id.clone(), entry.timestamp);
        out.push(NumberedLine { line, entry });
    }
    Ok(out)
}

pub fn to_jsonl(lines: &[TranscriptLine]) -> String {
    let mut out = String::new();
    for l in lines {
        out.push_str(&serde_json::to_string(l).expect("transcript lines serialize"));
        out.push('\n');
    }
    out
}
