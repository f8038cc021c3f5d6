//! Ground-truth episode storage.
//!
//! Episodes are the only data the engine treats as authoritative: sentence
//! records, the short-term window and profile entries are all derived from
//! them. The [`EpisodeStore`] trait is the storage port; [`MemoryStore`] keeps
//! everything in process and [`FileStore`] adds a single-file append log.

mod file;
mod memory;

use std::collections::HashMap;
use std::ops::RangeInclusive;

use thiserror::Error;

use crate::types::{AgentKey, Episode, EpisodeId, MemoryScope, Metadata, Producer, Timestamp};

pub use file::FileStore;
pub use memory::MemoryStore;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("episode content is empty")]
    EmptyContent,
    #[error("timestamp {given} precedes last timestamp {last} in session")]
    TimestampRegression { last: Timestamp, given: Timestamp },
    #[error("scope field `{0}` is empty")]
    ScopeInvalid(&'static str),
    #[error("malformed range {lo}..={hi}")]
    BadRange { lo: u64, hi: u64 },
    #[error("storage i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt store file: {0}")]
    Corrupt(String),
}

/// Input to [`EpisodeStore::append`]; the store assigns id and sequence.
#[derive(Debug, Clone)]
pub struct NewEpisode {
    pub scope: MemoryScope,
    pub content: String,
    pub producer: Producer,
    pub timestamp: Timestamp,
    pub metadata: Metadata,
}

/// Storage port for raw episodes.
///
/// Implementations must keep per-session sequences dense (`0..n`) and must
/// never rewrite stored content.
pub trait EpisodeStore: Send + Sync {
    fn append(&self, episode: NewEpisode) -> Result<Episode, StoreError>;

    /// Episodes with `lo <= sequence <= hi`, ascending. Out-of-range bounds are clamped.
    fn get_range(&self, scope: &MemoryScope, lo: u64, hi: u64) -> Result<Vec<Episode>, StoreError>;

    fn get(&self, id: EpisodeId) -> Option<Episode>;

    fn session_len(&self, scope: &MemoryScope) -> u64;

    fn last_timestamp(&self, scope: &MemoryScope) -> Option<Timestamp>;

    /// Removes every episode of the session. Returns how many were removed.
    fn delete_session(&self, scope: &MemoryScope) -> Result<usize, StoreError>;

    /// Every session that currently holds at least one episode.
    fn sessions(&self) -> Vec<MemoryScope>;

    fn sessions_of(&self, key: &AgentKey) -> Vec<MemoryScope> {
        self.sessions()
            .into_iter()
            .filter(|s| &s.agent_key() == key)
            .collect()
    }
}

pub(crate) fn validate_new(episode: &NewEpisode, last: Option<Timestamp>) -> Result<(), StoreError> {
    if let Some(field) = episode.scope.invalid_field() {
        return Err(StoreError::ScopeInvalid(field));
    }
    if episode.content.trim().is_empty() {
        return Err(StoreError::EmptyContent);
    }
    if let Some(last) = last {
        if episode.timestamp < last {
            return Err(StoreError::TimestampRegression {
                last,
                given: episode.timestamp,
            });
        }
    }
    Ok(())
}

/// In-memory session table shared by both store implementations.
#[derive(Debug, Default)]
pub(crate) struct Table {
    sessions: HashMap<MemoryScope, Vec<Episode>>,
    by_id: HashMap<EpisodeId, (MemoryScope, u64)>,
    next_id: u64,
}

impl Table {
    pub(crate) fn prepare(&self, new: NewEpisode) -> Result<Episode, StoreError> {
        let session = self.sessions.get(&new.scope);
        validate_new(&new, session.and_then(|s| s.last()).map(|e| e.timestamp))?;
        Ok(Episode {
            id: EpisodeId(self.next_id),
            sequence: session.map_or(0, |s| s.len() as u64),
            scope: new.scope,
            producer: new.producer,
            timestamp: new.timestamp,
            content: new.content,
            metadata: new.metadata,
        })
    }

    /// Inserts an already-validated episode. Used directly by log replay.
    pub(crate) fn commit(&mut self, episode: Episode) {
        self.next_id = self.next_id.max(episode.id.0 + 1);
        self.by_id
            .insert(episode.id, (episode.scope.clone(), episode.sequence));
        self.sessions
            .entry(episode.scope.clone())
            .or_default()
            .push(episode);
    }

    pub(crate) fn range(&self, scope: &MemoryScope, range: RangeInclusive<u64>) -> Vec<Episode> {
        let Some(session) = self.sessions.get(scope) else {
            return Vec::new();
        };
        let len = session.len() as u64;
        if len == 0 || *range.start() >= len {
            return Vec::new();
        }
        let hi = (*range.end()).min(len - 1);
        session[*range.start() as usize..=hi as usize].to_vec()
    }

    pub(crate) fn get(&self, id: EpisodeId) -> Option<Episode> {
        let (scope, seq) = self.by_id.get(&id)?;
        self.sessions.get(scope)?.get(*seq as usize).cloned()
    }

    pub(crate) fn len(&self, scope: &MemoryScope) -> u64 {
        self.sessions.get(scope).map_or(0, |s| s.len() as u64)
    }

    pub(crate) fn last_timestamp(&self, scope: &MemoryScope) -> Option<Timestamp> {
        self.sessions.get(scope)?.last().map(|e| e.timestamp)
    }

    pub(crate) fn remove(&mut self, scope: &MemoryScope) -> usize {
        let Some(removed) = self.sessions.remove(scope) else {
            return 0;
        };
        for ep in &removed {
            self.by_id.remove(&ep.id);
        }
        removed.len()
    }

    pub(crate) fn sessions(&self) -> Vec<MemoryScope> {
        let mut out: Vec<_> = self
            .sessions
            .iter()
            .filter(|(_, eps)| !eps.is_empty())
            .map(|(s, _)| s.clone())
            .collect();
        out.sort();
        out
    }
}

pub(crate) fn check_range(lo: u64, hi: u64) -> Result<(), StoreError> {
    if lo > hi {
        Err(StoreError::BadRange { lo, hi })
    } else {
        Ok(())
    }
}
