//! Nucleus expansion and cluster de-duplication.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::RetrievalConfig;
use crate::ltm::SentenceRecord;
use crate::store::EpisodeStore;
use crate::types::{Episode, EpisodeId, MemoryScope, SentenceId, Timestamp};

/// A nucleus episode plus its session neighbors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeCluster {
    pub nucleus: EpisodeId,
    /// Consecutive episodes of one session, ascending by sequence.
    pub members: Vec<Episode>,
    /// Reranker score; zero until reranked.
    pub score: f64,
    /// Best vector similarity among the sentences that selected this cluster.
    pub nucleus_similarity: f64,
    pub matched_sentences: Vec<SentenceId>,
}

impl EpisodeCluster {
    pub fn member_ids(&self) -> Vec<EpisodeId> {
        self.members.iter().map(|e| e.id).collect()
    }

    pub fn nucleus_episode(&self) -> &Episode {
        self.members
            .iter()
            .find(|e| e.id == self.nucleus)
            .unwrap_or(&self.members[0])
    }

    pub fn nucleus_sequence(&self) -> u64 {
        self.nucleus_episode().sequence
    }

    pub fn nucleus_timestamp(&self) -> Timestamp {
        self.nucleus_episode().timestamp
    }

    pub fn scope(&self) -> &MemoryScope {
        &self.members[0].scope
    }

    pub fn first_sequence(&self) -> u64 {
        self.members[0].sequence
    }

    pub fn last_sequence(&self) -> u64 {
        self.members[self.members.len() - 1].sequence
    }

    /// Text handed to the reranker.
    pub fn passage(&self) -> String {
        self.members
            .iter()
            .map(|e| e.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Turns sentence hits into clusters: each hit's parent episode becomes a
/// nucleus, extended by `neighbors_before` preceding and `neighbors_after`
/// following episodes of the same session, clamped at session boundaries.
/// Hits sharing a parent episode collapse into one cluster. Output follows
/// first-hit order.
pub fn contextualize(
    hits: &[(SentenceRecord, f64)],
    cfg: &RetrievalConfig,
    store: &dyn EpisodeStore,
) -> Vec<EpisodeCluster> {
    let mut order: Vec<EpisodeId> = Vec::new();
    let mut grouped: HashMap<EpisodeId, (&SentenceRecord, f64, Vec<SentenceId>)> = HashMap::new();
    for (record, similarity) in hits {
        let entry = grouped.entry(record.parent_episode).or_insert_with(|| {
            order.push(record.parent_episode);
            (record, *similarity, Vec::new())
        });
        entry.1 = entry.1.max(*similarity);
        entry.2.push(record.id);
    }

    order
        .into_iter()
        .filter_map(|nucleus| {
            let (record, similarity, matched) = grouped.remove(&nucleus)?;
            let seq = record.parent_sequence;
            let lo = seq.saturating_sub(cfg.neighbors_before as u64);
            let hi = seq.saturating_add(cfg.neighbors_after as u64);
            let members = store.get_range(&record.scope, lo, hi).ok()?;
            // the nucleus may have been deleted since the index snapshot was taken
            if !members.iter().any(|e| e.id == nucleus) {
                return None;
            }
            Some(EpisodeCluster {
                nucleus,
                members,
                score: 0.0,
                nucleus_similarity: similarity,
                matched_sentences: matched,
            })
        })
        .collect()
}

/// Removes short-term episodes from clusters, then merges clusters that share
/// an episode into one consecutive run.
///
/// Output is ordered by (scope, first sequence). If the short-term window
/// punches a hole into a cluster, each remaining run becomes its own
/// cluster; runs that lost the nucleus take the member closest to it.
pub fn dedup(clusters: Vec<EpisodeCluster>, stm_window: &[Episode]) -> Vec<EpisodeCluster> {
    let in_stm: HashSet<EpisodeId> = stm_window.iter().map(|e| e.id).collect();

    let mut pieces: Vec<EpisodeCluster> = Vec::new();
    for cluster in clusters {
        pieces.extend(strip_stm(cluster, &in_stm));
    }

    let mut by_scope: BTreeMap<MemoryScope, Vec<EpisodeCluster>> = BTreeMap::new();
    for piece in pieces {
        by_scope.entry(piece.scope().clone()).or_default().push(piece);
    }

    let mut out = Vec::new();
    for (_, mut group) in by_scope {
        group.sort_by_key(|c| (c.first_sequence(), c.last_sequence(), c.nucleus));
        let mut iter = group.into_iter();
        let Some(mut current) = iter.next() else {
            continue;
        };
        for next in iter {
            if next.first_sequence() <= current.last_sequence() {
                current = merge(current, next);
            } else {
                out.push(std::mem::replace(&mut current, next));
            }
        }
        out.push(current);
    }
    out
}

fn strip_stm(cluster: EpisodeCluster, in_stm: &HashSet<EpisodeId>) -> Vec<EpisodeCluster> {
    if !cluster.members.iter().any(|e| in_stm.contains(&e.id)) {
        return vec![cluster];
    }
    let nucleus_seq = cluster.nucleus_sequence();
    let mut runs: Vec<Vec<Episode>> = Vec::new();
    let mut last_seq: Option<u64> = None;
    for episode in cluster.members {
        if in_stm.contains(&episode.id) {
            last_seq = None;
            continue;
        }
        match (last_seq, runs.last_mut()) {
            (Some(prev), Some(run)) if prev + 1 == episode.sequence => run.push(episode.clone()),
            _ => runs.push(vec![episode.clone()]),
        }
        last_seq = Some(episode.sequence);
    }
    if runs.is_empty() {
        return Vec::new();
    }

    let closest = |run: &[Episode]| -> EpisodeId {
        run.iter()
            .min_by_key(|e| (e.sequence.abs_diff(nucleus_seq), e.sequence))
            .map(|e| e.id)
            .expect("runs are non-empty")
    };
    // the run nearest the original nucleus keeps the matched sentences
    let owner = runs
        .iter()
        .enumerate()
        .min_by_key(|(_, run)| {
            run.iter()
                .map(|e| (e.sequence.abs_diff(nucleus_seq), e.sequence))
                .min()
        })
        .map(|(i, _)| i)
        .unwrap_or(0);

    runs.into_iter()
        .enumerate()
        .map(|(i, run)| {
            let nucleus = if run.iter().any(|e| e.id == cluster.nucleus) {
                cluster.nucleus
            } else {
                closest(&run)
            };
            EpisodeCluster {
                nucleus,
                members: run,
                score: cluster.score,
                nucleus_similarity: cluster.nucleus_similarity,
                matched_sentences: if i == owner {
                    cluster.matched_sentences.clone()
                } else {
                    Vec::new()
                },
            }
        })
        .collect()
}

fn merge(a: EpisodeCluster, b: EpisodeCluster) -> EpisodeCluster {
    let a_wins = a.nucleus_similarity > b.nucleus_similarity
        || (a.nucleus_similarity == b.nucleus_similarity
            && a.nucleus_sequence() <= b.nucleus_sequence());
    let nucleus = if a_wins { a.nucleus } else { b.nucleus };

    let mut members = a.members;
    let tail = members.last().map(|e| e.sequence).unwrap_or(0);
    members.extend(b.members.into_iter().filter(|e| e.sequence > tail));

    let mut matched = a.matched_sentences;
    for id in b.matched_sentences {
        if !matched.contains(&id) {
            matched.push(id);
        }
    }

    EpisodeCluster {
        nucleus,
        members,
        score: a.score.max(b.score),
        nucleus_similarity: a.nucleus_similarity.max(b.nucleus_similarity),
        matched_sentences: matched,
    }
}
