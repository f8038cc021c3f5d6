//! Query sets: a JSON array of [`QuerySpec`].

use mnemo_core::engine::RetrievalOverrides;
use mnemo_core::ltm::SearchFilter;
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QuerySpec {
    /// Stable name used in reports; defaults to the 1-based position.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub query: String,
    /// `session_id:sequence` references into the replayed transcript.
    #[serde(default)]
    pub gold_episode_ids: Vec<String>,
    #[serde(default)]
    pub config: RetrievalOverrides,
    /// Overrides the run's mode for this query.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent_mode: Option<bool>,
    /// Session the query is issued from; defaults to the first gold reference's session.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
    /// Defaults to searching every session of the replay.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<SearchFilter>,
    /// Reference answer for the optional answer-quality hook.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_answer: Option<String>,
}

impl QuerySpec {
    pub fn name(&self, index: usize) -> String {
        self.id.clone().unwrap_or_else(|| format!("q{:03}", index + 1))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GoldRef {
    pub session_id: String,
    pub sequence: u64,
}

impl GoldRef {
    pub fn parse(raw: &str) -> Option<Self> {
        let (session, seq) = raw.rsplit_once(':')?;
        if session.is_empty() {
            return None;
        }
        Some(Self {
            session_id: session.to_string(),
            sequence: seq.trim().parse().ok()?,
        })
    }
}

impl std::fmt::Display for GoldRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.session_id, self.sequence)
    }
}

pub fn parse_queries(text: &str) -> Result<Vec<QuerySpec>, HarnessError> {
    let specs: Vec<QuerySpec> = serde_json::from_str(text).map_err(|e| HarnessError::Queries(e.to_string()))?;
    if let Some(i) = specs.iter().position(|q| q.query.trim().is_empty()) {
        return Err(HarnessError::Queries(format!("entry {} has an empty query", i + 1)));
    }
    Ok(specs)
}

/// Field-wise `top` over `base`.
pub fn layer(base: &RetrievalOverrides, top: &RetrievalOverrides) -> RetrievalOverrides {
    RetrievalOverrides {
        nucleus_k: top.nucleus_k.or(base.nucleus_k),
        cluster_top_k: top.cluster_top_k.or(base.cluster_top_k),
        neighbors_before: top.neighbors_before.or(base.neighbors_before),
        neighbors_after: top.neighbors_after.or(base.neighbors_after),
        user_query_prefix: top.user_query_prefix.or(base.user_query_prefix),
        format: top.format.or(base.format),
    }
}
