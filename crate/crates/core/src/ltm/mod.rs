//! Long-term memory indexing.
//!
//! Each episode goes through four steps: sentence extraction, metadata
//! inheritance (timestamp, producer, session, custom metadata, fresh id),
//! linkage to the parent episode, and embedding. Records land in a
//! [`VectorIndex`].

mod segment;
mod vector;

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::providers::{EmbedderPort, ProviderError, ProviderRegistry};
use crate::types::{Episode, MemoryScope, SentenceId};

pub use segment::{default_abbreviations, segment_sentences, DEFAULT_ABBREVIATIONS};
pub use vector::{
    normalize, ExactIndex, IndexError, SearchFilter, SentenceRecord, TimeRange, VectorIndex,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndexConfig {
    /// One record per sentence when true, one per episode otherwise.
    pub chunking_enabled: bool,
    #[serde(rename = "embedder", alias = "embedder_id")]
    pub embedder_id: String,
    pub abbreviations: BTreeSet<String>,
}

impl Default for IndexConfig {
    fn default() -> Self {
        Self {
            chunking_enabled: true,
            embedder_id: "hash".into(),
            abbreviations: default_abbreviations(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum LtmError {
    #[error("no embedder registered under id `{0}`")]
    UnknownEmbedder(String),
    #[error("embedder unavailable: {0}")]
    EmbedderUnavailable(ProviderError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ReindexReport {
    pub indexed: usize,
    pub still_pending: usize,
}

pub struct LtmIndex {
    config: IndexConfig,
    embedder: Arc<dyn EmbedderPort>,
    index: Arc<dyn VectorIndex>,
    next_id: AtomicU64,
    reindex_queue: Mutex<Vec<Episode>>,
}

impl LtmIndex {
    /// Resolves `config.embedder_id` in the registry and uses the exact backend.
    pub fn new(config: IndexConfig, registry: &ProviderRegistry) -> Result<Self, LtmError> {
        let embedder = registry
            .embedder(&config.embedder_id)
            .ok_or_else(|| LtmError::UnknownEmbedder(config.embedder_id.clone()))?;
        let index = Arc::new(ExactIndex::new(embedder.dimension()));
        Self::with_backend(config, embedder, index)
    }

    pub fn with_backend(
        config: IndexConfig,
        embedder: Arc<dyn EmbedderPort>,
        index: Arc<dyn VectorIndex>,
    ) -> Result<Self, LtmError> {
        if embedder.id() != config.embedder_id {
            return Err(LtmError::UnknownEmbedder(config.embedder_id.clone()));
        }
        if embedder.dimension() != index.dimension() {
            return Err(LtmError::Index(IndexError::DimensionMismatch {
                expected: index.dimension(),
                got: embedder.dimension(),
            }));
        }
        Ok(Self {
            config,
            embedder,
            index,
            next_id: AtomicU64::new(0),
            reindex_queue: Mutex::new(Vec::new()),
        })
    }

    pub fn config(&self) -> &IndexConfig {
        &self.config
    }

    pub fn embedder(&self) -> &Arc<dyn EmbedderPort> {
        &self.embedder
    }

    /// Index keys for an episode: its sentences, or the whole content.
    pub fn keys_for(&self, content: &str) -> Vec<String> {
        if self.config.chunking_enabled {
            segment_sentences(content, &self.config.abbreviations)
        } else {
            let trimmed = content.trim();
            if trimmed.is_empty() {
                Vec::new()
            } else {
                vec![trimmed.to_string()]
            }
        }
    }

    /// Segments, embeds and stores an episode. On embedder failure the
    /// episode is queued for [`drain_reindex_queue`](Self::drain_reindex_queue).
    pub fn index_episode(&self, episode: &Episode) -> Result<Vec<SentenceRecord>, LtmError> {
        let keys = self.keys_for(&episode.content);
        let vectors = match self.embedder.embed(&keys) {
            Ok(v) => v,
            Err(e) => {
                self.reindex_queue.lock().push(episode.clone());
                return Err(LtmError::EmbedderUnavailable(e));
            }
        };
        if let Some(bad) = vectors.iter().find(|v| v.len() != self.index.dimension()) {
            return Err(LtmError::Index(IndexError::DimensionMismatch {
                expected: self.index.dimension(),
                got: bad.len(),
            }));
        }
        let records: Vec<SentenceRecord> = keys
            .into_iter()
            .zip(vectors)
            .enumerate()
            .map(|(position, (text, embedding))| SentenceRecord {
                id: SentenceId(self.next_id.fetch_add(1, Ordering::SeqCst)),
                text,
                parent_episode: episode.id,
                parent_sequence: episode.sequence,
                position: position as u32,
                scope: episode.scope.clone(),
                timestamp: episode.timestamp,
                producer: episode.producer,
                metadata: episode.metadata.clone(),
                embedding,
            })
            .collect();
        self.index.insert(records.clone())?;
        Ok(records)
    }

    pub fn embed_query(&self, text: &str) -> Result<Vec<f32>, LtmError> {
        let mut out = self
            .embedder
            .embed(&[text.to_string()])
            .map_err(LtmError::EmbedderUnavailable)?;
        out.pop()
            .ok_or_else(|| {
                LtmError::EmbedderUnavailable(ProviderError::InvalidResponse {
                    port: self.embedder.id().to_string(),
                    reason: "empty embedding batch".into(),
                })
            })
    }

    pub fn knn_search(
        &self,
        scope: &MemoryScope,
        query_vector: &[f32],
        k: usize,
        filter: &SearchFilter,
    ) -> Result<Vec<(SentenceRecord, f64)>, LtmError> {
        Ok(self.index.search(scope, query_vector, k, filter)?)
    }

    pub fn remove_session(&self, scope: &MemoryScope) -> usize {
        self.reindex_queue.lock().retain(|e| &e.scope != scope);
        self.index.remove_session(scope)
    }

    pub fn session_records(&self, scope: &MemoryScope) -> Vec<SentenceRecord> {
        self.index.session_records(scope)
    }

    pub fn pending_reindex(&self) -> usize {
        self.reindex_queue.lock().len()
    }

    /// Retries every queued episode once. Episodes that fail again stay queued.
    pub fn drain_reindex_queue(&self) -> ReindexReport {
        let queued = std::mem::take(&mut *self.reindex_queue.lock());
        let mut report = ReindexReport::default();
        for episode in queued {
            // a failing embed re-queues the episode itself
            if self.index_episode(&episode).is_ok() {
                report.indexed += 1;
            }
        }
        report.still_pending = self.pending_reindex();
        report
    }
}
