//! Request and response bodies. Field names are snake_case throughout.

use mnemo_core::engine::{RetrievalOverrides, SearchResult};
use mnemo_core::ltm::SearchFilter;
use mnemo_core::types::{EpisodeId, MemoryScope, Metadata, Timestamp, UserScope};
use serde::{Deserialize, Serialize};

/// The five isolation fields. Missing fields deserialize as empty and are
/// rejected by scope validation with the field's name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScopeFields {
    pub org_id: String,
    pub project_id: String,
    pub user_id: String,
    pub agent_id: String,
    pub session_id: String,
}

impl ScopeFields {
    pub fn scope(&self) -> MemoryScope {
        MemoryScope::new(
            &self.org_id,
            &self.project_id,
            &self.user_id,
            &self.agent_id,
            &self.session_id,
        )
    }
}

impl From<&MemoryScope> for ScopeFields {
    fn from(s: &MemoryScope) -> Self {
        Self {
            org_id: s.org_id.clone(),
            project_id: s.project_id.clone(),
            user_id: s.user_id.clone(),
            agent_id: s.agent_id.clone(),
            session_id: s.session_id.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AddMemoryRequest {
    #[serde(flatten)]
    pub scope: ScopeFields,
    #[serde(default)]
    pub content: String,
    /// `user`, `agent` (or `assistant`) or `system`; defaults to `user`.
    #[serde(default)]
    pub producer: Option<String>,
    /// RFC 3339; defaults to the time the request was received.
    #[serde(default)]
    pub timestamp: Option<Timestamp>,
    #[serde(default)]
    pub metadata: Metadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AddMemoryResponse {
    pub episode_id: EpisodeId,
    pub sequence: u64,
    pub timestamp: Timestamp,
    pub sentences: usize,
    #[serde(default)]
    pub warnings: Vec<String>,
    pub request_id: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchRequest {
    #[serde(flatten)]
    pub scope: ScopeFields,
    #[serde(default)]
    pub query: String,
    #[serde(default)]
    pub agent_mode: bool,
    #[serde(default)]
    pub config: RetrievalOverrides,
    #[serde(default)]
    pub filter: SearchFilter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub request_id: String,
    /// Every returned episode, short-term window first.
    pub episode_ids: Vec<EpisodeId>,
    #[serde(flatten)]
    pub result: SearchResult,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileQuery {
    pub org_id: String,
    pub project_id: String,
    pub user_id: String,
    pub category: Option<String>,
    pub key: Option<String>,
}

impl ProfileQuery {
    pub fn user_scope(&self) -> UserScope {
        UserScope::new(&self.org_id, &self.project_id, &self.user_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeleteSessionResponse {
    pub removed: usize,
    pub request_id: String,
}
