//! Sentence vector index.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{
    AgentKey, EpisodeId, MemoryScope, Metadata, Producer, SentenceId, Timestamp,
};

/// One indexed sentence (or whole episode when chunking is off).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub id: SentenceId,
    pub text: String,
    pub parent_episode: EpisodeId,
    /// Parent episode's sequence within its session.
    pub parent_sequence: u64,
    /// 0-based position of the sentence inside the parent episode.
    pub position: u32,
    pub scope: MemoryScope,
    pub timestamp: Timestamp,
    pub producer: Producer,
    pub metadata: Metadata,
    /// Unit-normalized embedding.
    #[serde(skip)]
    pub embedding: Vec<f32>,
}

/// Inclusive time interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeRange {
    pub start: Timestamp,
    pub end: Timestamp,
}

impl TimeRange {
    pub fn contains(&self, t: Timestamp) -> bool {
        self.start <= t && t <= self.end
    }
}

/// Restricts which records a search may return.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchFilter {
    /// Every pair must match the record's inherited metadata exactly.
    pub metadata: Metadata,
    pub time_range: Option<TimeRange>,
    pub producer: Option<Producer>,
    /// Search every session of the same (org, project, user, agent)
    /// instead of only the scope's own session.
    pub all_sessions: bool,
}

impl SearchFilter {
    pub fn matches(&self, scope: &MemoryScope, record: &SentenceRecord) -> bool {
        if !self.all_sessions && record.scope.session_id != scope.session_id {
            return false;
        }
        if let Some(range) = &self.time_range {
            if !range.contains(record.timestamp) {
                return false;
            }
        }
        if let Some(p) = self.producer {
            if record.producer != p {
                return false;
            }
        }
        self.metadata
            .iter()
            .all(|(k, v)| record.metadata.get(k) == Some(v))
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum IndexError {
    #[error("vector has dimension {got}, index expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("k must be at least 1")]
    ZeroK,
}

/// Nearest-neighbor backend. Scores are cosine similarities; results are
/// ordered by descending score, ties by ascending record id.
pub trait VectorIndex: Send + Sync {
    fn dimension(&self) -> usize;
    fn insert(&self, records: Vec<SentenceRecord>) -> Result<(), IndexError>;
    fn search(
        &self,
        scope: &MemoryScope,
        query: &[f32],
        k: usize,
        filter: &SearchFilter,
    ) -> Result<Vec<(SentenceRecord, f64)>, IndexError>;
    /// Removes every record of the session; returns how many were dropped.
    fn remove_session(&self, scope: &MemoryScope) -> usize;
    /// All records of a session in insertion order.
    fn session_records(&self, scope: &MemoryScope) -> Vec<SentenceRecord>;
}

pub fn normalize(v: &[f32]) -> Vec<f32> {
    let norm = v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    if norm == 0.0 {
        return vec![0.0; v.len()];
    }
    v.iter().map(|x| (*x as f64 / norm) as f32).collect()
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum()
}

type Partition = Arc<Vec<Arc<SentenceRecord>>>;

/// Exact linear-scan index with a bounded candidate heap.
///
/// Records are partitioned per (org, project, user, agent). A search clones
/// the partition's `Arc` and scans that snapshot without holding the lock.
#[derive(Debug)]
pub struct ExactIndex {
    dimension: usize,
    partitions: RwLock<HashMap<AgentKey, Partition>>,
}

impl ExactIndex {
    pub fn new(dimension: usize) -> Self {
        Self {
            dimension,
            partitions: RwLock::new(HashMap::new()),
        }
    }

    fn snapshot(&self, key: &AgentKey) -> Option<Partition> {
        self.partitions.read().get(key).cloned()
    }
}

#[derive(Debug)]
struct Candidate {
    score: f64,
    id: SentenceId,
    slot: usize,
}

// "Greater" means "worse", so the heap's top is the weakest kept candidate.
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then_with(|| self.id.cmp(&other.id))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl VectorIndex for ExactIndex {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn insert(&self, records: Vec<SentenceRecord>) -> Result<(), IndexError> {
        if let Some(bad) = records.iter().find(|r| r.embedding.len() != self.dimension) {
            return Err(IndexError::DimensionMismatch {
                expected: self.dimension,
                got: bad.embedding.len(),
            });
        }
        let mut partitions = self.partitions.write();
        for mut record in records {
            record.embedding = normalize(&record.embedding);
            let partition = partitions.entry(record.scope.agent_key()).or_default();
            Arc::make_mut(partition).push(Arc::new(record));
        }
        Ok(())
    }

    fn search(
        &self,
        scope: &MemoryScope,
        query: &[f32],
        k: usize,
        filter: &SearchFilter,
    ) -> Result<Vec<(SentenceRecord, f64)>, IndexError> {
        if k == 0 {
            return Err(IndexError::ZeroK);
        }
        if query.len() != self.dimension {
            return Err(IndexError::DimensionMismatch {
                expected: self.dimension,
                got: query.len(),
            });
        }
        let Some(records) = self.snapshot(&scope.agent_key()) else {
            return Ok(Vec::new());
        };
        let query = normalize(query);
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        for (slot, record) in records.iter().enumerate() {
            if !filter.matches(scope, record) {
                continue;
            }
            let candidate = Candidate {
                score: dot(&query, &record.embedding),
                id: record.id,
                slot,
            };
            if heap.len() < k {
                heap.push(candidate);
            } else if heap.peek().is_some_and(|worst| candidate < *worst) {
                heap.pop();
                heap.push(candidate);
            }
        }
        Ok(heap
            .into_sorted_vec()
            .into_iter()
            .map(|c| ((*records[c.slot]).clone(), c.score))
            .collect())
    }

    fn remove_session(&self, scope: &MemoryScope) -> usize {
        let mut partitions = self.partitions.write();
        let Some(partition) = partitions.get_mut(&scope.agent_key()) else {
            return 0;
        };
        let before = partition.len();
        Arc::make_mut(partition).retain(|r| r.scope.session_id != scope.session_id);
        before - partition.len()
    }

    fn session_records(&self, scope: &MemoryScope) -> Vec<SentenceRecord> {
        self.snapshot(&scope.agent_key())
            .map(|p| {
                p.iter()
                    .filter(|r| r.scope.session_id == scope.session_id)
                    .map(|r| (**r).clone())
                    .collect()
            })
            .unwrap_or_default()
    }
}
