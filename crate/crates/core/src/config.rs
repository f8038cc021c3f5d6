//! Engine configuration, loadable from TOML.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::AgentConfig;
use crate::ltm::IndexConfig;
use crate::profile::ProfileConfig;
use crate::prompts::PromptSet;
use crate::providers::http::{EndpointConfig, HttpChat, HttpEmbedder, HttpReranker};
use crate::providers::{HashEmbedder, OverlapReranker, ProviderRegistry};
use crate::recall::RetrievalConfig;
use crate::stm::StmConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// One provider instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderSpec {
    HashEmbedder {
        id: String,
        dimension: usize,
    },
    OverlapReranker {
        id: String,
    },
    HttpEmbedder {
        id: String,
        dimension: usize,
        #[serde(flatten)]
        endpoint: EndpointConfig,
    },
    HttpChat {
        id: String,
        #[serde(flatten)]
        endpoint: EndpointConfig,
    },
    HttpReranker {
        id: String,
        #[serde(flatten)]
        endpoint: EndpointConfig,
    },
}

impl ProviderSpec {
    pub fn id(&self) -> &str {
        match self {
            ProviderSpec::HashEmbedder { id, .. }
            | ProviderSpec::OverlapReranker { id }
            | ProviderSpec::HttpEmbedder { id, .. }
            | ProviderSpec::HttpChat { id, .. }
            | ProviderSpec::HttpReranker { id, .. } => id,
        }
    }
}

/// Which registered providers the engine uses besides the index embedder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelsConfig {
    /// Chat model for summaries, profile extraction and the agent.
    pub chat: Option<String>,
    pub reranker: String,
}

impl Default for ModelsConfig {
    fn default() -> Self {
        Self {
            chat: None,
            reranker: "overlap".into(),
        }
    }
}

/// Prompt template files overriding the built-in texts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptFiles {
    pub router: Option<PathBuf>,
    pub sufficiency: Option<PathBuf>,
    pub split: Option<PathBuf>,
    pub summary: Option<PathBuf>,
    pub profile: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StorageConfig {
    /// Episode log file; episodes stay in memory when unset.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerConfig {
    pub bind: String,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub storage: StorageConfig,
    pub server: ServerConfig,
    pub stm: StmConfig,
    pub index: IndexConfig,
    pub retrieval: RetrievalConfig,
    pub profile: ProfileConfig,
    pub agent: AgentConfig,
    pub models: ModelsConfig,
    pub prompts: PromptFiles,
    pub providers: Vec<ProviderSpec>,
    /// Resolved prompt texts; filled from `prompts` by [`EngineConfig::load`].
    #[serde(skip)]
    pub prompt_set: PromptSet,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            storage: StorageConfig::default(),
            server: ServerConfig::default(),
            stm: StmConfig::default(),
            index: IndexConfig::default(),
            retrieval: RetrievalConfig::default(),
            profile: ProfileConfig::default(),
            agent: AgentConfig::default(),
            models: ModelsConfig::default(),
            prompts: PromptFiles::default(),
            providers: vec![
                ProviderSpec::HashEmbedder {
                    id: "hash".into(),
                    dimension: 64,
                },
                ProviderSpec::OverlapReranker {
                    id: "overlap".into(),
                },
            ],
            prompt_set: PromptSet::default(),
        }
    }
}

impl EngineConfig {
    /// Parses TOML. Prompt file paths are resolved against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut config: EngineConfig = toml::from_str(text)?;
        config.resolve_prompts(base_dir)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let mut config = Self::from_toml_str(&text, base)?;
        if let Some(p) = &config.storage.path {
            if p.is_relative() {
                config.storage.path = Some(base.join(p));
            }
        }
        Ok(config)
    }

    fn resolve_prompts(&mut self, base_dir: &Path) -> Result<(), ConfigError> {
        let read = |p: &Option<PathBuf>, fallback: &str| -> Result<String, ConfigError> {
            match p {
                None => Ok(fallback.to_string()),
                Some(p) => {
                    let full = if p.is_relative() { base_dir.join(p) } else { p.clone() };
                    std::fs::read_to_string(&full).map_err(|source| ConfigError::Io { path: full, source })
                }
            }
        };
        let d = PromptSet::default();
        self.prompt_set = PromptSet {
            router: read(&self.prompts.router, &d.router)?,
            sufficiency: read(&self.prompts.sufficiency, &d.sufficiency)?,
            split: read(&self.prompts.split, &d.split)?,
            summary: read(&self.prompts.summary, &d.summary)?,
            profile: read(&self.prompts.profile, &d.profile)?,
        };
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.retrieval
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.agent.validate().map_err(ConfigError::Invalid)?;
        if self.stm.capacity == 0 {
            return Err(ConfigError::Invalid("stm.capacity must be positive".into()));
        }
        let mut ids = HashSet::new();
        for spec in &self.providers {
            if !ids.insert(spec.id()) {
                return Err(ConfigError::Invalid(format!("duplicate provider id `{}`", spec.id())));
            }
        }
        Ok(())
    }

    /// Instantiates every configured provider.
    pub fn build_registry(&self) -> ProviderRegistry {
        let mut registry = ProviderRegistry::new();
        for spec in &self.providers {
            registry = match spec.clone() {
                ProviderSpec::HashEmbedder { id, dimension } => {
                    registry.with_embedder(Arc::new(HashEmbedder::new(id, dimension)))
                }
                ProviderSpec::OverlapReranker { id } => {
                    registry.with_reranker(Arc::new(OverlapReranker::new(id)))
                }
                ProviderSpec::HttpEmbedder { id, dimension, endpoint } => {
                    registry.with_embedder(Arc::new(HttpEmbedder::new(id, dimension, endpoint)))
                }
                ProviderSpec::HttpChat { id, endpoint } => {
                    registry.with_chat(Arc::new(HttpChat::new(id, endpoint)))
                }
                ProviderSpec::HttpReranker { id, endpoint } => {
                    registry.with_reranker(Arc::new(HttpReranker::new(id, endpoint)))
                }
            };
        }
        registry
    }
}
