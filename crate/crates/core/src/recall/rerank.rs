//! Cluster reranking against one or more queries.

use std::cmp::Ordering;

use super::EpisodeCluster;
use crate::ledger::TokenLedger;
use crate::providers::RerankerPort;

/// Joins queries into the single reranker query: one query per line, inner
/// line breaks flattened, blanks and exact repeats dropped.
pub fn combined_query(query_texts: &[String]) -> String {
    let mut seen: Vec<String> = Vec::new();
    for q in query_texts {
        let flat = q.split_whitespace().collect::<Vec<_>>().join(" ");
        if !flat.is_empty() && !seen.contains(&flat) {
            seen.push(flat);
        }
    }
    seen.join("\n")
}

fn by_score(a: &EpisodeCluster, b: &EpisodeCluster) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.nucleus_sequence().cmp(&b.nucleus_sequence()))
        .then_with(|| a.nucleus.cmp(&b.nucleus))
}

/// Scores every cluster against the combined query and keeps the best `top_k`.
///
/// Ties go to the earlier nucleus sequence, then the lower nucleus id, so the
/// result does not depend on input order. When the reranker fails the
/// clusters are ordered by nucleus similarity instead and a warning is
/// written to `ledger`.
pub fn rerank(
    query_texts: &[String],
    mut clusters: Vec<EpisodeCluster>,
    top_k: usize,
    reranker: &dyn RerankerPort,
    ledger: &mut TokenLedger,
) -> Vec<EpisodeCluster> {
    if clusters.is_empty() {
        return clusters;
    }
    let query = combined_query(query_texts);
    let passages: Vec<String> = clusters.iter().map(EpisodeCluster::passage).collect();
    match reranker.score(&query, &passages) {
        Ok(scores) if scores.len() == clusters.len() && scores.iter().all(|s| s.is_finite()) => {
            for (cluster, score) in clusters.iter_mut().zip(scores) {
                cluster.score = score;
            }
        }
        outcome => {
            let reason = match outcome {
                Err(e) => e.to_string(),
                Ok(scores) => format!("reranker returned {} scores for {} clusters", scores.len(), clusters.len()),
            };
            ledger.warn(format!("rerank fell back to vector similarity: {reason}"));
            for cluster in clusters.iter_mut() {
                cluster.score = cluster.nucleus_similarity;
            }
        }
    }
    clusters.sort_by(by_score);
    clusters.truncate(top_k);
    clusters
}
