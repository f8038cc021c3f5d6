use parking_lot::RwLock;

use super::{check_range, EpisodeStore, NewEpisode, StoreError, Table};
use crate::types::{Episode, EpisodeId, MemoryScope, Timestamp};

/// Volatile store; everything lives in process memory.
#[derive(Debug, Default)]
pub struct MemoryStore {
    table: RwLock<Table>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl EpisodeStore for MemoryStore {
    fn append(&self, episode: NewEpisode) -> Result<Episode, StoreError> {
        let mut table = self.table.write();
        let episode = table.prepare(episode)?;
        table.commit(episode.clone());
        Ok(episode)
    }

    fn get_range(&self, scope: &MemoryScope, lo: u64, hi: u64) -> Result<Vec<Episode>, StoreError> {
        if let Some(field) = scope.invalid_field() {
            return Err(StoreError::ScopeInvalid(field));
        }
        check_range(lo, hi)?;
        Ok(self.table.read().range(scope, lo..=hi))
    }

    fn get(&self, id: EpisodeId) -> Option<Episode> {
        self.table.read().get(id)
    }

    fn session_len(&self, scope: &MemoryScope) -> u64 {
        self.table.read().len(scope)
    }

    fn last_timestamp(&self, scope: &MemoryScope) -> Option<Timestamp> {
        self.table.read().last_timestamp(scope)
    }

    fn delete_session(&self, scope: &MemoryScope) -> Result<usize, StoreError> {
        Ok(self.table.write().remove(scope))
    }

    fn sessions(&self) -> Vec<MemoryScope> {
        self.table.read().sessions()
    }
}
