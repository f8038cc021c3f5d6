//! The memory engine facade: ingestion fan-out, search, profile queries and
//! session lifecycle over one shared set of subsystems.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{AgentOutcome, ChainState, Executed, RetrievalAgent, RouteDecision};
use crate::config::EngineConfig;
use crate::ledger::TokenLedger;
use crate::ltm::{LtmError, LtmIndex, ReindexReport, SearchFilter};
use crate::profile::{Category, DrainReport, ProfileEntry, ProfileMemory};
use crate::providers::{ChatPort, ProviderRegistry};
use crate::recall::{FormatStyle, RecallError, RecallPipeline, RetrievalConfig, RetrievalOutcome};
use crate::stm::ShortTermMemory;
use crate::store::{EpisodeStore, FileStore, MemoryStore, NewEpisode, StoreError};
use crate::types::{Episode, MemoryScope, UserScope};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Recall(RecallError),
    #[error("provider `{port}` unavailable: {reason}")]
    ProviderUnavailable { port: String, reason: String },
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl From<RecallError> for EngineError {
    fn from(e: RecallError) -> Self {
        match e {
            RecallError::Embedder(p) => EngineError::ProviderUnavailable {
                port: p.port().to_string(),
                reason: p.to_string(),
            },
            other => EngineError::Recall(other),
        }
    }
}

impl From<LtmError> for EngineError {
    fn from(e: LtmError) -> Self {
        EngineError::from(RecallError::from(e))
    }
}

/// Result of one `add_episode` call.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ingested {
    pub episode: Episode,
    pub sentences: usize,
    /// Episodes pushed out of the short-term window.
    pub evicted: usize,
    /// Degraded subsystems (queued re-index, stale summary, skipped profile).
    pub warnings: Vec<String>,
}

/// Cumulative ingestion counters and per-stage wall time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestStats {
    pub episodes: u64,
    pub sentences: u64,
    pub store_time: Duration,
    pub stm_time: Duration,
    pub index_time: Duration,
    pub profile_time: Duration,
}

/// Per-request overrides of the configured retrieval settings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalOverrides {
    pub nucleus_k: Option<usize>,
    pub cluster_top_k: Option<usize>,
    pub neighbors_before: Option<usize>,
    pub neighbors_after: Option<usize>,
    pub user_query_prefix: Option<bool>,
    pub format: Option<FormatStyle>,
}

impl RetrievalOverrides {
    pub fn apply(&self, base: &RetrievalConfig) -> RetrievalConfig {
        let mut cfg = base.clone();
        if let Some(v) = self.nucleus_k {
            cfg.nucleus_k = v;
        }
        if let Some(v) = self.cluster_top_k {
            cfg.cluster_top_k = v;
        }
        if let Some(v) = self.neighbors_before {
            cfg.neighbors_before = v;
        }
        if let Some(v) = self.neighbors_after {
            cfg.neighbors_after = v;
        }
        if let Some(v) = self.user_query_prefix {
            cfg.user_query_prefix = v;
        }
        if let Some(v) = self.format {
            cfg.format_style = v;
        }
        cfg
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchOptions {
    pub agent_mode: bool,
    pub config: RetrievalOverrides,
    pub filter: SearchFilter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub outcome: RetrievalOutcome,
    /// Present in agent mode.
    pub route: Option<RouteDecision>,
    pub executed: Option<Executed>,
    pub queries: Vec<String>,
    pub chain: Option<ChainState>,
}

impl SearchResult {
    fn plain(outcome: RetrievalOutcome, query: &str) -> Self {
        Self {
            outcome,
            route: None,
            executed: None,
            queries: vec![query.trim().to_string()],
            chain: None,
        }
    }
}

impl From<AgentOutcome> for SearchResult {
    fn from(a: AgentOutcome) -> Self {
        Self {
            outcome: a.outcome,
            route: Some(a.decision),
            executed: Some(a.executed),
            queries: a.queries,
            chain: a.chain,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MaintenanceReport {
    pub reindex: ReindexReport,
    pub profile: DrainReport,
}

pub struct MemoryEngine {
    config: EngineConfig,
    store: Arc<dyn EpisodeStore>,
    stm: Arc<ShortTermMemory>,
    ltm: Arc<LtmIndex>,
    profile: Arc<ProfileMemory>,
    pipeline: Arc<RecallPipeline>,
    agent: Option<RetrievalAgent>,
    session_locks: Mutex<HashMap<MemoryScope, Arc<Mutex<()>>>>,
    stats: Mutex<IngestStats>,
}

impl MemoryEngine {
    /// Builds providers and storage from configuration alone.
    pub fn from_config(config: EngineConfig) -> Result<Self, EngineError> {
        let registry = config.build_registry();
        let store: Arc<dyn EpisodeStore> = match &config.storage.path {
            Some(path) => Arc::new(FileStore::open(path)?),
            None => Arc::new(MemoryStore::new()),
        };
        Self::new(config, &registry, store)
    }

    pub fn new(
        config: EngineConfig,
        registry: &ProviderRegistry,
        store: Arc<dyn EpisodeStore>,
    ) -> Result<Self, EngineError> {
        config.validate().map_err(|e| EngineError::Config(e.to_string()))?;
        let chat: Option<Arc<dyn ChatPort>> = match &config.models.chat {
            Some(id) => Some(
                registry
                    .chat(id)
                    .ok_or_else(|| EngineError::Config(format!("no chat model registered under id `{id}`")))?,
            ),
            None => None,
        };
        let reranker = registry.reranker(&config.models.reranker).ok_or_else(|| {
            EngineError::Config(format!("no reranker registered under id `{}`", config.models.reranker))
        })?;
        let ltm = Arc::new(
            LtmIndex::new(config.index.clone(), registry).map_err(|e| EngineError::Config(e.to_string()))?,
        );
        let stm = Arc::new(
            ShortTermMemory::new(config.stm.clone(), chat.clone()).with_prompt(config.prompt_set.summary.clone()),
        );
        let profile = Arc::new(
            ProfileMemory::new(config.profile.clone(), chat.clone()).with_prompt(config.prompt_set.profile.clone()),
        );
        let pipeline = Arc::new(RecallPipeline::new(store.clone(), stm.clone(), ltm.clone(), reranker));
        let agent = chat.map(|chat| {
            RetrievalAgent::new(pipeline.clone(), chat, config.agent.clone(), config.prompt_set.clone())
        });

        let engine = Self {
            config,
            store,
            stm,
            ltm,
            profile,
            pipeline,
            agent,
            session_locks: Mutex::new(HashMap::new()),
            stats: Mutex::new(IngestStats::default()),
        };
        engine.rebuild_from_store();
        Ok(engine)
    }

    /// Replays persisted episodes into the window and the index after a restart.
    fn rebuild_from_store(&self) {
        for scope in self.store.sessions() {
            let n = self.store.session_len(&scope);
            let Ok(episodes) = self.store.get_range(&scope, 0, n.saturating_sub(1)) else {
                continue;
            };
            let keep_from = episodes.len().saturating_sub(self.config.stm.capacity);
            for (i, episode) in episodes.into_iter().enumerate() {
                let _ = self.ltm.index_episode(&episode);
                if i >= keep_from {
                    let _ = self.stm.append(&scope, episode);
                }
            }
        }
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn store(&self) -> &Arc<dyn EpisodeStore> {
        &self.store
    }

    pub fn stm(&self) -> &Arc<ShortTermMemory> {
        &self.stm
    }

    pub fn ltm(&self) -> &Arc<LtmIndex> {
        &self.ltm
    }

    pub fn profile(&self) -> &Arc<ProfileMemory> {
        &self.profile
    }

    pub fn pipeline(&self) -> &Arc<RecallPipeline> {
        &self.pipeline
    }

    pub fn agent(&self) -> Option<&RetrievalAgent> {
        self.agent.as_ref()
    }

    fn session_lock(&self, scope: &MemoryScope) -> Arc<Mutex<()>> {
        self.session_locks.lock().entry(scope.clone()).or_default().clone()
    }

    /// Stores the episode, then hands it to the short-term window, the
    /// long-term index and profile extraction. Only the store step can fail
    /// the call; the others degrade to warnings.
    pub fn add_episode(&self, new: NewEpisode) -> Result<Ingested, EngineError> {
        let lock = self.session_lock(&new.scope);
        let _guard = lock.lock();
        let scope = new.scope.clone();

        let t = Instant::now();
        let episode = self.store.append(new)?;
        let store_time = t.elapsed();

        let mut warnings = Vec::new();
        let t = Instant::now();
        let evicted = match self.stm.append(&scope, episode.clone()) {
            Ok(evicted) => evicted.len(),
            Err(e) => {
                warnings.push(format!("short-term window: {e}"));
                0
            }
        };
        if self.stm.state(&scope).stale {
            warnings.push("short-term summary is stale".into());
        }
        let stm_time = t.elapsed();

        let t = Instant::now();
        let sentences = match self.ltm.index_episode(&episode) {
            Ok(records) => records.len(),
            Err(e) => {
                warnings.push(format!("index: {e}; queued for re-index"));
                0
            }
        };
        let index_time = t.elapsed();

        let t = Instant::now();
        if let Err(e) = self.profile.observe(&episode) {
            warnings.push(format!("profile: {e}; queued"));
        }
        let profile_time = t.elapsed();

        let mut stats = self.stats.lock();
        stats.episodes += 1;
        stats.sentences += sentences as u64;
        stats.store_time += store_time;
        stats.stm_time += stm_time;
        stats.index_time += index_time;
        stats.profile_time += profile_time;

        Ok(Ingested {
            episode,
            sentences,
            evicted,
            warnings,
        })
    }

    pub fn get_episodes(&self, scope: &MemoryScope, lo: u64, hi: u64) -> Result<Vec<Episode>, EngineError> {
        Ok(self.store.get_range(scope, lo, hi)?)
    }

    pub fn search(&self, scope: &MemoryScope, query: &str, options: &SearchOptions) -> Result<SearchResult, EngineError> {
        if let Some(field) = scope.invalid_field() {
            return Err(EngineError::Store(StoreError::ScopeInvalid(field)));
        }
        let cfg = options.config.apply(&self.config.retrieval);
        if options.agent_mode {
            let agent = self.agent.as_ref().ok_or_else(|| EngineError::ProviderUnavailable {
                port: "chat".into(),
                reason: "agent mode needs a chat model; set models.chat".into(),
            })?;
            Ok(agent.run(query, scope, &cfg, &options.filter)?.into())
        } else {
            let outcome = self.pipeline.search(scope, query, &cfg, &options.filter)?;
            Ok(SearchResult::plain(outcome, query))
        }
    }

    pub fn query_profile(&self, user: &UserScope, category: Option<Category>, key: Option<&str>) -> Vec<ProfileEntry> {
        self.profile.query_profile(user, category, key)
    }

    /// Removes the session from every subsystem. Returns the number of
    /// episodes removed; repeated calls return 0.
    pub fn delete_session(&self, scope: &MemoryScope) -> Result<usize, EngineError> {
        if let Some(field) = scope.invalid_field() {
            return Err(EngineError::Store(StoreError::ScopeInvalid(field)));
        }
        let lock = self.session_lock(scope);
        let _guard = lock.lock();
        let removed = self.store.delete_session(scope)?;
        self.ltm.remove_session(scope);
        self.stm.remove(scope);
        self.profile.remove_session(scope);
        Ok(removed)
    }

    /// Retries queued index and profile work.
    pub fn run_maintenance(&self) -> MaintenanceReport {
        MaintenanceReport {
            reindex: self.ltm.drain_reindex_queue(),
            profile: self.profile.drain_pending(),
        }
    }

    pub fn ingest_stats(&self) -> IngestStats {
        self.stats.lock().clone()
    }

    /// Token usage of summary and profile calls made during ingestion.
    pub fn background_ledger(&self) -> TokenLedger {
        let mut ledger = self.stm.ledger();
        ledger.merge(&self.profile.ledger());
        ledger
    }
}
