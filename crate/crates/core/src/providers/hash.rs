use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use super::{EmbedderPort, ProviderError};

/// Stable 64-bit hash of a string (first eight bytes of its SHA-256).
pub fn stable_hash(text: &str) -> u64 {
    let digest = Sha256::digest(text.as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// Pseudo-random unit vector keyed by `key`.
pub fn keyed_unit_vector(key: &str, dimension: usize) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(key));
    let raw: Vec<f64> = (0..dimension).map(|_| rng.sample(StandardNormal)).collect();
    normalize_f64(&raw)
}

fn normalize_f64(v: &[f64]) -> Vec<f32> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return v.iter().map(|_| 0.0).collect();
    }
    v.iter().map(|x| (x / norm) as f32).collect()
}

/// Phrase-to-vector table used to plant nearest-neighbor structure.
///
/// A text matches a phrase when it contains it (case-insensitive); the
/// longest matching phrase wins, earlier insertions win ties.
#[derive(Debug, Clone, Default)]
pub struct SeedTable {
    entries: Vec<(String, Vec<f32>)>,
}

impl SeedTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, phrase: &str, vector: Vec<f32>) -> &mut Self {
        self.entries.push((phrase.to_lowercase(), vector));
        self
    }

    pub fn with(mut self, phrase: &str, vector: Vec<f32>) -> Self {
        self.insert(phrase, vector);
        self
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lookup(&self, text: &str) -> Option<&[f32]> {
        let lower = text.to_lowercase();
        let mut best: Option<&(String, Vec<f32>)> = None;
        for entry in &self.entries {
            if lower.contains(entry.0.as_str())
                && best.is_none_or(|b| entry.0.len() > b.0.len())
            {
                best = Some(entry);
            }
        }
        best.map(|(_, v)| v.as_slice())
    }
}

/// Deterministic embedder double.
///
/// Unseeded texts map to a pseudo-random unit vector derived from a stable
/// hash of the text. Seeded texts map to the seed vector plus a small
/// text-keyed perturbation, so two distinct texts never share a vector.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    id: String,
    dimension: usize,
    seeds: SeedTable,
    jitter: f64,
    calls: std::sync::Arc<parking_lot::Mutex<Vec<String>>>,
}

impl HashEmbedder {
    pub fn new(id: impl Into<String>, dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self {
            id: id.into(),
            dimension,
            seeds: SeedTable::new(),
            jitter: 1e-3,
            calls: Default::default(),
        }
    }

    pub fn with_seeds(mut self, seeds: SeedTable) -> Self {
        self.seeds = seeds;
        self
    }

    pub fn with_jitter(mut self, jitter: f64) -> Self {
        self.jitter = jitter;
        self
    }

    /// Every text passed to `embed`, in call order.
    pub fn seen_texts(&self) -> Vec<String> {
        self.calls.lock().clone()
    }

    pub fn vector_for(&self, text: &str) -> Vec<f32> {
        let base = keyed_unit_vector(text, self.dimension);
        match self.seeds.lookup(text) {
            None => base,
            Some(seed) => {
                let mixed: Vec<f64> = seed
                    .iter()
                    .zip(&base)
                    .map(|(s, b)| *s as f64 + self.jitter * *b as f64)
                    .collect();
                normalize_f64(&mixed)
            }
        }
    }
}

impl EmbedderPort for HashEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
        self.calls.lock().extend(texts.iter().cloned());
        Ok(texts.iter().map(|t| self.vector_for(t)).collect())
    }
}
