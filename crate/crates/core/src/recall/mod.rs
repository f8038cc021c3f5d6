//! Staged search: short-term window, long-term vector search, neighbor
//! expansion, de-duplication, reranking and chronological presentation.

mod cluster;
pub mod render;
mod rerank;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::TokenLedger;
use crate::ltm::{IndexError, LtmError, LtmIndex, SearchFilter};
use crate::providers::{ProviderError, RerankerPort};
use crate::stm::ShortTermMemory;
use crate::store::EpisodeStore;
use crate::types::{Episode, EpisodeId, MemoryScope};

pub use cluster::{contextualize, dedup, EpisodeCluster};
pub use render::{escape_line_breaks, render_context, FormatStyle};
pub use rerank::{combined_query, rerank};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    /// Sentence hits fetched from the index.
    pub nucleus_k: usize,
    /// Clusters kept after reranking.
    pub cluster_top_k: usize,
    pub neighbors_before: usize,
    pub neighbors_after: usize,
    /// Embed `"user: " + query` instead of the bare query.
    pub user_query_prefix: bool,
    #[serde(rename = "format")]
    pub format_style: FormatStyle,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            nucleus_k: 64,
            cluster_top_k: 20,
            neighbors_before: 1,
            neighbors_after: 2,
            user_query_prefix: true,
            format_style: FormatStyle::StructuredLines,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), RecallError> {
        if self.nucleus_k == 0 || self.cluster_top_k == 0 {
            return Err(RecallError::InvalidConfig(
                "nucleus_k and cluster_top_k must be positive".into(),
            ));
        }
        if self.cluster_top_k > self.nucleus_k {
            return Err(RecallError::InvalidConfig(format!(
                "cluster_top_k ({}) exceeds nucleus_k ({})",
                self.cluster_top_k, self.nucleus_k
            )));
        }
        Ok(())
    }
}

pub const USER_QUERY_PREFIX: &str = "user: ";

#[derive(Debug, Error, PartialEq)]
pub enum RecallError {
    #[error("query is empty")]
    EmptyQuery,
    #[error("invalid retrieval config: {0}")]
    InvalidConfig(String),
    #[error("embedder unavailable: {0}")]
    Embedder(ProviderError),
    #[error(transparent)]
    Index(IndexError),
}

impl From<LtmError> for RecallError {
    fn from(e: LtmError) -> Self {
        match e {
            LtmError::EmbedderUnavailable(p) => RecallError::Embedder(p),
            LtmError::Index(i) => RecallError::Index(i),
            LtmError::UnknownEmbedder(id) => {
                RecallError::InvalidConfig(format!("no embedder registered under id `{id}`"))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalOutcome {
    pub stm_episodes: Vec<Episode>,
    pub stm_summary: String,
    /// Ordered by nucleus timestamp.
    pub ltm_clusters: Vec<EpisodeCluster>,
    pub rendered_context: String,
    pub ledger: TokenLedger,
}

impl RetrievalOutcome {
    /// Every episode id in the outcome: window first, then clusters in order.
    pub fn episode_ids(&self) -> Vec<EpisodeId> {
        self.stm_episodes
            .iter()
            .map(|e| e.id)
            .chain(self.ltm_clusters.iter().flat_map(|c| c.members.iter().map(|e| e.id)))
            .collect()
    }
}

/// The search entry point shared by plain recall and every agent strategy.
pub struct RecallPipeline {
    store: Arc<dyn EpisodeStore>,
    stm: Arc<ShortTermMemory>,
    ltm: Arc<LtmIndex>,
    reranker: Arc<dyn RerankerPort>,
    search_calls: AtomicU64,
}

impl RecallPipeline {
    pub fn new(
        store: Arc<dyn EpisodeStore>,
        stm: Arc<ShortTermMemory>,
        ltm: Arc<LtmIndex>,
        reranker: Arc<dyn RerankerPort>,
    ) -> Self {
        Self {
            store,
            stm,
            ltm,
            reranker,
            search_calls: AtomicU64::new(0),
        }
    }

    /// Number of `search` invocations so far.
    pub fn search_calls(&self) -> u64 {
        self.search_calls.load(Ordering::SeqCst)
    }

    pub fn search(
        &self,
        scope: &MemoryScope,
        query: &str,
        cfg: &RetrievalConfig,
        filter: &SearchFilter,
    ) -> Result<RetrievalOutcome, RecallError> {
        self.search_calls.fetch_add(1, Ordering::SeqCst);
        cfg.validate()?;
        let query = query.trim();
        if query.is_empty() {
            return Err(RecallError::EmptyQuery);
        }
        let (stm_episodes, stm_summary) = self.stm.get_context(scope);

        let embed_text = if cfg.user_query_prefix {
            format!("{USER_QUERY_PREFIX}{query}")
        } else {
            query.to_string()
        };
        let vector = self.ltm.embed_query(&embed_text)?;
        let hits = self.ltm.knn_search(scope, &vector, cfg.nucleus_k, filter)?;
        let clusters = if hits.is_empty() {
            Vec::new()
        } else {
            contextualize(&hits, cfg, self.store.as_ref())
        };
        Ok(self.finish(
            &[query.to_string()],
            clusters,
            cfg.cluster_top_k,
            cfg,
            stm_episodes,
            stm_summary,
            TokenLedger::new(),
        ))
    }

    /// Merges clusters pooled from several searches and reranks them against
    /// every query issued, keeping at most `budget` clusters.
    pub fn finalize_pooled(
        &self,
        scope: &MemoryScope,
        query_texts: &[String],
        pooled: Vec<EpisodeCluster>,
        budget: usize,
        cfg: &RetrievalConfig,
        ledger: TokenLedger,
    ) -> RetrievalOutcome {
        let (stm_episodes, stm_summary) = self.stm.get_context(scope);
        self.finish(query_texts, pooled, budget, cfg, stm_episodes, stm_summary, ledger)
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &self,
        query_texts: &[String],
        clusters: Vec<EpisodeCluster>,
        top_k: usize,
        cfg: &RetrievalConfig,
        stm_episodes: Vec<Episode>,
        stm_summary: String,
        mut ledger: TokenLedger,
    ) -> RetrievalOutcome {
        let clusters = dedup(clusters, &stm_episodes);
        let mut clusters = rerank(query_texts, clusters, top_k, self.reranker.as_ref(), &mut ledger);
        clusters.sort_by(|a, b| {
            a.nucleus_timestamp()
                .cmp(&b.nucleus_timestamp())
                .then_with(|| a.scope().session_id.cmp(&b.scope().session_id))
                .then_with(|| a.nucleus_sequence().cmp(&b.nucleus_sequence()))
        });
        let rendered_context =
            render_context(&stm_summary, &clusters, &stm_episodes, cfg.format_style);
        RetrievalOutcome {
            stm_episodes,
            stm_summary,
            ltm_clusters: clusters,
            rendered_context,
            ledger,
        }
    }
}
