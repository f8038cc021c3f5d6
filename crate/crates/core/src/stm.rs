//! Short-term memory: a bounded window of recent episodes per session plus a
//! rolling summary of what has scrolled out of it.
//!
//! Eviction only affects the window. Evicted episodes stay in the episode
//! store and the long-term index. Each eviction batch triggers one summary
//! call that folds the evicted episodes into the previous summary.

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::{LedgerNode, TokenLedger};
use crate::prompts;
use crate::providers::{ChatParams, ChatPort, ProviderError};
use crate::recall::render::{episode_line, FormatStyle};
use crate::types::{Episode, MemoryScope};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StmConfig {
    pub capacity: usize,
    pub summary_enabled: bool,
}

impl Default for StmConfig {
    fn default() -> Self {
        Self {
            capacity: 20,
            summary_enabled: true,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum StmError {
    #[error("episode belongs to scope {episode}, not {expected}")]
    ScopeMismatch { expected: String, episode: String },
    #[error("scope field `{0}` is empty")]
    ScopeInvalid(&'static str),
    #[error("session has no episodes to summarize")]
    NothingToSummarize,
    #[error("summary model unavailable: {0}")]
    LlmUnavailable(String),
}

/// Point-in-time copy of one session's short-term state.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StmState {
    pub window: Vec<Episode>,
    pub capacity: usize,
    pub summary: String,
    pub summary_version: u64,
    /// Set when the last summary attempt failed; cleared on success.
    pub stale: bool,
}

#[derive(Debug, Default)]
struct Session {
    window: VecDeque<Episode>,
    summary: String,
    summary_version: u64,
    stale: bool,
    /// Evicted episodes not yet folded into the summary.
    pending: Vec<Episode>,
}

pub struct ShortTermMemory {
    config: StmConfig,
    chat: Option<Arc<dyn ChatPort>>,
    prompt: String,
    sessions: RwLock<HashMap<MemoryScope, Arc<Mutex<Session>>>>,
    ledger: Mutex<TokenLedger>,
}

impl ShortTermMemory {
    pub fn new(config: StmConfig, chat: Option<Arc<dyn ChatPort>>) -> Self {
        Self {
            config: StmConfig {
                capacity: config.capacity.max(1),
                ..config
            },
            chat,
            prompt: prompts::SUMMARY.to_string(),
            sessions: RwLock::new(HashMap::new()),
            ledger: Mutex::new(TokenLedger::new()),
        }
    }

    pub fn with_prompt(mut self, prompt: impl Into<String>) -> Self {
        self.prompt = prompt.into();
        self
    }

    pub fn config(&self) -> &StmConfig {
        &self.config
    }

    fn session(&self, scope: &MemoryScope) -> Arc<Mutex<Session>> {
        if let Some(s) = self.sessions.read().get(scope) {
            return s.clone();
        }
        self.sessions
            .write()
            .entry(scope.clone())
            .or_default()
            .clone()
    }

    /// Appends an episode; returns the episodes evicted from the window.
    pub fn append(&self, scope: &MemoryScope, episode: Episode) -> Result<Vec<Episode>, StmError> {
        if let Some(field) = scope.invalid_field() {
            return Err(StmError::ScopeInvalid(field));
        }
        if &episode.scope != scope {
            return Err(StmError::ScopeMismatch {
                expected: scope.to_string(),
                episode: episode.scope.to_string(),
            });
        }
        let session = self.session(scope);
        let mut state = session.lock();
        state.window.push_back(episode);
        let mut evicted = Vec::new();
        while state.window.len() > self.config.capacity {
            evicted.extend(state.window.pop_front());
        }
        if evicted.is_empty() {
            return Ok(evicted);
        }
        state.pending.extend(evicted.iter().cloned());
        if self.config.summary_enabled {
            if let Err(e) = self.summarize_locked(&mut state) {
                tracing::warn!(%scope, error = %e, "stm summary left stale");
            }
        }
        Ok(evicted)
    }

    /// Regenerates the session summary from the previous summary and the
    /// episodes evicted since (or the current window when nothing was evicted).
    pub fn summarize(&self, scope: &MemoryScope) -> Result<String, StmError> {
        let session = self
            .sessions
            .read()
            .get(scope)
            .cloned()
            .ok_or(StmError::NothingToSummarize)?;
        let mut state = session.lock();
        self.summarize_locked(&mut state)
    }

    fn summarize_locked(&self, state: &mut Session) -> Result<String, StmError> {
        let source: Vec<&Episode> = if state.pending.is_empty() {
            state.window.iter().collect()
        } else {
            state.pending.iter().collect()
        };
        if source.is_empty() {
            return Err(StmError::NothingToSummarize);
        }
        let Some(chat) = &self.chat else {
            state.stale = true;
            return Err(StmError::LlmUnavailable("no chat provider configured".into()));
        };
        let episodes = source
            .iter()
            .map(|e| episode_line(e, FormatStyle::StructuredLines))
            .collect::<Vec<_>>()
            .join("\n");
        let previous = if state.summary.is_empty() {
            "(none)"
        } else {
            state.summary.as_str()
        };
        let prompt = prompts::fill(
            &self.prompt,
            &[("previous_summary", previous), ("episodes", &episodes)],
        );
        match chat.complete(&prompt, &ChatParams::default()) {
            Ok(completion) => {
                self.ledger.lock().record(LedgerNode::Summary, &completion);
                state.summary = completion.text.trim().to_string();
                state.summary_version += 1;
                state.stale = false;
                state.pending.clear();
                Ok(state.summary.clone())
            }
            Err(e) => {
                self.ledger.lock().record_failed_call(LedgerNode::Summary);
                state.stale = true;
                Err(StmError::LlmUnavailable(provider_reason(&e)))
            }
        }
    }

    /// Current window and summary. Never calls a model.
    pub fn get_context(&self, scope: &MemoryScope) -> (Vec<Episode>, String) {
        match self.sessions.read().get(scope) {
            Some(session) => {
                let state = session.lock();
                (state.window.iter().cloned().collect(), state.summary.clone())
            }
            None => (Vec::new(), String::new()),
        }
    }

    pub fn state(&self, scope: &MemoryScope) -> StmState {
        match self.sessions.read().get(scope) {
            Some(session) => {
                let s = session.lock();
                StmState {
                    window: s.window.iter().cloned().collect(),
                    capacity: self.config.capacity,
                    summary: s.summary.clone(),
                    summary_version: s.summary_version,
                    stale: s.stale,
                }
            }
            None => StmState {
                capacity: self.config.capacity,
                ..StmState::default()
            },
        }
    }

    pub fn remove(&self, scope: &MemoryScope) -> bool {
        self.sessions.write().remove(scope).is_some()
    }

    /// Token usage of all summary calls so far.
    pub fn ledger(&self) -> TokenLedger {
        self.ledger.lock().clone()
    }
}

fn provider_reason(e: &ProviderError) -> String {
    e.to_string()
}
