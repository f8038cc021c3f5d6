use std::collections::BTreeSet;
use std::sync::Arc;

use parking_lot::Mutex;

use super::{ProviderError, RerankerPort};

/// Lowercased alphanumeric word set.
pub fn tokenize(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// `|q ∩ p| / sqrt(|q| * |p|)` over word sets; zero when either side is empty.
pub fn overlap_score(query: &str, passage: &str) -> f64 {
    let q = tokenize(query);
    let p = tokenize(passage);
    if q.is_empty() || p.is_empty() {
        return 0.0;
    }
    let shared = q.intersection(&p).count() as f64;
    shared / ((q.len() * p.len()) as f64).sqrt()
}

/// Deterministic token-overlap reranker; the default when no model is configured.
#[derive(Debug, Clone)]
pub struct OverlapReranker {
    id: String,
}

impl OverlapReranker {
    pub fn new(id: impl Into<String>) -> Self {
        Self { id: id.into() }
    }
}

impl Default for OverlapReranker {
    fn default() -> Self {
        Self::new("overlap")
    }
}

impl RerankerPort for OverlapReranker {
    fn id(&self) -> &str {
        &self.id
    }

    fn score(&self, query: &str, passages: &[String]) -> Result<Vec<f64>, ProviderError> {
        Ok(passages.iter().map(|p| overlap_score(query, p)).collect())
    }
}

/// Wraps a reranker and records every query it is asked to score.
pub struct RecordingReranker {
    inner: Arc<dyn RerankerPort>,
    queries: Mutex<Vec<String>>,
}

impl RecordingReranker {
    pub fn new(inner: Arc<dyn RerankerPort>) -> Self {
        Self {
            inner,
            queries: Mutex::new(Vec::new()),
        }
    }

    pub fn queries(&self) -> Vec<String> {
        self.queries.lock().clone()
    }

    pub fn clear(&self) {
        self.queries.lock().clear();
    }
}

impl RerankerPort for RecordingReranker {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn score(&self, query: &str, passages: &[String]) -> Result<Vec<f64>, ProviderError> {
        self.queries.lock().push(query.to_string());
        self.inner.score(query, passages)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlap_formula() {
        // q = {vegetarian, restaurant}, p = {a, vegetarian, restaurant, nearby}
        let s = overlap_score("vegetarian restaurant", "A vegetarian restaurant nearby");
        assert!((s - 2.0 / 8f64.sqrt()).abs() < 1e-12);
        assert_eq!(overlap_score("vegetarian restaurant", "the weather is nice"), 0.0);
        assert_eq!(overlap_score("", "anything"), 0.0);
    }

    #[test]
    fn tokenizer_is_case_and_punctuation_insensitive() {
        let t = tokenize("Hello, WORLD! hello");
        assert_eq!(t.into_iter().collect::<Vec<_>>(), vec!["hello", "world"]);
    }
}
