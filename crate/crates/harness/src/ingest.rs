//! Transcript replay into an engine.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use mnemo_core::store::{NewEpisode, StoreError};
use mnemo_core::{EngineError, MemoryEngine};
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;
use crate::transcript::{NumberedLine, ScopeTemplate};

pub const INGEST_SCHEMA_VERSION: u32 = 1;

/// Counts and stage timings of one replay. Timings are measured, not
/// deterministic, and are kept out of evaluation reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub schema_version: u32,
    pub episodes: u64,
    pub sentences: u64,
    pub sessions: usize,
    pub warnings: Vec<String>,
    pub store_ms: f64,
    pub stm_ms: f64,
    pub index_ms: f64,
    pub profile_ms: f64,
    pub wall_ms: f64,
    pub episodes_per_sec: f64,
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1000.0
}

/// Replays `lines` in file order.
///
/// Every session is checked against the store before anything is written,
/// so a bad line aborts the replay with no episode of its session stored.
/// A failure during the write phase removes the partial session when the
/// session was new.
pub fn ingest(
    engine: &MemoryEngine,
    lines: &[NumberedLine],
    template: &ScopeTemplate,
) -> Result<IngestReport, HarnessError> {
    let mut first_line: BTreeMap<&str, usize> = BTreeMap::new();
    for l in lines {
        let session = l.entry.session_id.as_str();
        if !first_line.contains_key(session) {
            first_line.insert(session, l.line);
            let scope = template.scope(session);
            if let Some(field) = scope.invalid_field() {
                return Err(HarnessError::IngestAborted {
                    session: session.into(),
                    line: l.line,
                    source: EngineError::Store(StoreError::ScopeInvalid(field)),
                });
            }
            if let Some(last) = engine.store().last_timestamp(&scope) {
                if l.entry.timestamp < last {
                    return Err(HarnessError::IngestAborted {
                        session: session.into(),
                        line: l.line,
                        source: EngineError::Store(StoreError::TimestampRegression {
                            last,
                            given: l.entry.timestamp,
                        }),
                    });
                }
            }
        }
    }
    let fresh: BTreeMap<&str, bool> = first_line
        .keys()
        .map(|s| (*s, engine.store().session_len(&template.scope(s)) == 0))
        .collect();

    let before = engine.ingest_stats();
    let started = Instant::now();
    let mut warnings = Vec::new();
    let mut sentences = 0u64;
    for l in lines {
        let scope = template.scope(&l.entry.session_id);
        let result = engine.add_episode(NewEpisode {
            scope: scope.clone(),
            content: l.entry.content.clone(),
            producer: l.entry.producer,
            timestamp: l.entry.timestamp,
            metadata: l.entry.metadata.clone(),
        });
        match result {
            Ok(done) => {
                sentences += done.sentences as u64;
                warnings.extend(done.warnings.into_iter().map(|w| format!("line {}: {w}", l.line)));
            }
            Err(source) => {
                if fresh[l.entry.session_id.as_str()] {
                    let _ = engine.delete_session(&scope);
                }
                return Err(HarnessError::IngestAborted {
                    session: l.entry.session_id.clone(),
                    line: l.line,
                    source,
                });
            }
        }
    }
    let wall = started.elapsed();
    let after = engine.ingest_stats();
    let episodes = lines.len() as u64;
    Ok(IngestReport {
        schema_version: INGEST_SCHEMA_VERSION,
        episodes,
        sentences,
        sessions: first_line.len(),
        warnings,
        store_ms: ms(after.store_time.saturating_sub(before.store_time)),
        stm_ms: ms(after.stm_time.saturating_sub(before.stm_time)),
        index_ms: ms(after.index_time.saturating_sub(before.index_time)),
        profile_ms: ms(after.profile_time.saturating_sub(before.profile_time)),
        wall_ms: ms(wall),
        episodes_per_sec: if wall.is_zero() { 0.0 } else { episodes as f64 / wall.as_secs_f64() },
    })
}
