//! Ports for external models and their adapters.
//!
//! Three ports exist: [`EmbedderPort`], [`ChatPort`] and [`RerankerPort`].
//! Each has an HTTP adapter in [`http`] and a deterministic in-process double
//! ([`HashEmbedder`], [`ScriptedChat`], [`OverlapReranker`]) so the whole
//! engine runs without network access.

pub mod http;
pub mod stub;
mod hash;
mod overlap;
mod scripted;

use std::collections::HashMap;
use std::sync::Arc;

use thiserror::Error;

pub use hash::{keyed_unit_vector, stable_hash, HashEmbedder, SeedTable};
pub use overlap::{overlap_score, tokenize, OverlapReranker, RecordingReranker};
pub use scripted::{ScriptedChat, ScriptRule};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ProviderError {
    #[error("provider `{port}` unavailable: {reason}")]
    Unavailable { port: String, reason: String },
    #[error("provider `{port}` rejected credentials")]
    AuthFailure { port: String },
    #[error("provider `{port}` returned an invalid response: {reason}")]
    InvalidResponse { port: String, reason: String },
    #[error("scripted provider `{port}` has no response left for the prompt")]
    ScriptExhausted { port: String },
}

impl ProviderError {
    pub fn port(&self) -> &str {
        match self {
            ProviderError::Unavailable { port, .. }
            | ProviderError::AuthFailure { port }
            | ProviderError::InvalidResponse { port, .. }
            | ProviderError::ScriptExhausted { port } => port,
        }
    }

    pub fn unavailable(port: impl Into<String>, reason: impl Into<String>) -> Self {
        ProviderError::Unavailable {
            port: port.into(),
            reason: reason.into(),
        }
    }
}

/// Text embedding model with a fixed output dimension.
pub trait EmbedderPort: Send + Sync {
    fn id(&self) -> &str;
    fn dimension(&self) -> usize;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatParams {
    pub temperature: f32,
    pub max_tokens: Option<u32>,
}

impl Default for ChatParams {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            max_tokens: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

/// Chat/completion model. Every call reports its token usage.
pub trait ChatPort: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, prompt: &str, params: &ChatParams) -> Result<Completion, ProviderError>;
}

/// Scores passages against a query; one finite score per passage.
pub trait RerankerPort: Send + Sync {
    fn id(&self) -> &str;
    fn score(&self, query: &str, passages: &[String]) -> Result<Vec<f64>, ProviderError>;
}

/// Whitespace token count used by the in-process doubles.
///
/// Not equivalent to any provider tokenizer; only relative numbers matter.
pub fn whitespace_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

/// Named provider instances, resolved by id from configuration.
#[derive(Default, Clone)]
pub struct ProviderRegistry {
    embedders: HashMap<String, Arc<dyn EmbedderPort>>,
    chats: HashMap<String, Arc<dyn ChatPort>>,
    rerankers: HashMap<String, Arc<dyn RerankerPort>>,
}

impl ProviderRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_embedder(mut self, port: Arc<dyn EmbedderPort>) -> Self {
        self.embedders.insert(port.id().to_string(), port);
        self
    }

    pub fn with_chat(mut self, port: Arc<dyn ChatPort>) -> Self {
        self.chats.insert(port.id().to_string(), port);
        self
    }

    pub fn with_reranker(mut self, port: Arc<dyn RerankerPort>) -> Self {
        self.rerankers.insert(port.id().to_string(), port);
        self
    }

    pub fn embedder(&self, id: &str) -> Option<Arc<dyn EmbedderPort>> {
        self.embedders.get(id).cloned()
    }

    pub fn chat(&self, id: &str) -> Option<Arc<dyn ChatPort>> {
        self.chats.get(id).cloned()
    }

    pub fn reranker(&self, id: &str) -> Option<Arc<dyn RerankerPort>> {
        self.rerankers.get(id).cloned()
    }
}
