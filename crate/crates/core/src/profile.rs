//! User profile memory: facts and preferences extracted from user messages,
//! with last-writer-wins supersession per (category, key).

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::{LedgerNode, TokenLedger};
use crate::prompts;
use crate::providers::{ChatParams, ChatPort};
use crate::types::{Episode, EpisodeId, MemoryScope, Producer, ProfileEntryId, Timestamp, UserScope};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Demographic,
    Preference,
    Behavior,
    Professional,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Demographic,
        Category::Preference,
        Category::Behavior,
        Category::Professional,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Demographic => "demographic",
            Category::Preference => "preference",
            Category::Behavior => "behavior",
            Category::Professional => "professional",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "demographic" | "demographics" => Ok(Category::Demographic),
            "preference" | "preferences" => Ok(Category::Preference),
            "behavior" | "behaviour" | "behaviors" => Ok(Category::Behavior),
            "professional" => Ok(Category::Professional),
            other => Err(format!("unknown profile category `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileEntry {
    pub id: ProfileEntryId,
    pub scope_user: UserScope,
    pub category: Category,
    pub key: String,
    pub value: String,
    pub source_episode: EpisodeId,
    pub source_session: String,
    pub created_at: Timestamp,
    pub superseded_by: Option<ProfileEntryId>,
}

impl ProfileEntry {
    pub fn is_live(&self) -> bool {
        self.superseded_by.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileConfig {
    pub enabled: bool,
    /// User episodes per extraction call.
    pub batch_size: usize,
    /// Skip agent and system messages.
    pub only_user: bool,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            batch_size: 1,
            only_user: true,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ProfileError {
    #[error("profile extraction model unavailable: {0}")]
    LlmUnavailable(String),
}

/// Lowercase snake case: `"Home City"` and `"homeCity"` both become `home_city`.
pub fn normalize_key(key: &str) -> String {
    let mut out = String::new();
    let mut prev_lower = false;
    let mut pending_sep = false;
    for c in key.trim().chars() {
        if c.is_alphanumeric() {
            if (pending_sep || (prev_lower && c.is_uppercase())) && !out.is_empty() {
                out.push('_');
            }
            pending_sep = false;
            prev_lower = c.is_lowercase() || c.is_ascii_digit();
            out.extend(c.to_lowercase());
        } else {
            pending_sep = true;
            prev_lower = false;
        }
    }
    out
}

/// One extracted triple, plus the 1-based message number in batch mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractedFact {
    pub category: Category,
    pub key: String,
    pub value: String,
    pub message: Option<usize>,
}

/// Parses `FACT: category | key | value [| n]` lines. Malformed lines are skipped.
pub fn parse_facts(reply: &str) -> Vec<ExtractedFact> {
    prompts::tagged_values(reply, "FACT")
        .into_iter()
        .filter_map(|line| {
            let parts: Vec<&str> = line.split('|').map(str::trim).collect();
            if parts.len() < 3 || parts.len() > 4 {
                return None;
            }
            let category = parts[0].parse().ok()?;
            let key = normalize_key(parts[1]);
            let value = parts[2].to_string();
            if key.is_empty() || value.is_empty() {
                return None;
            }
            let message = match parts.get(3) {
                Some(n) => Some(n.trim_start_matches(['#', '[']).trim_end_matches(']').parse().ok()?),
                None => None,
            };
            Some(ExtractedFact { category, key, value, message })
        })
        .collect()
}

#[derive(Debug, Default)]
struct UserState {
    entries: Vec<ProfileEntry>,
    /// User episodes waiting for a full batch.
    buffer: Vec<Episode>,
    /// Batches whose extraction call failed.
    failed: Vec<Vec<Episode>>,
}

impl UserState {
    fn live_index(&self, category: Category, key: &str) -> Option<usize> {
        self.entries
            .iter()
            .position(|e| e.is_live() && e.category == category && e.key == key)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DrainReport {
    pub observed: usize,
    pub still_pending: usize,
}

pub struct ProfileMemory {
    config: ProfileConfig,
    chat: Option<Arc<dyn ChatPort>>,
    prompt: String,
    users: RwLock<HashMap<UserScope, Arc<Mutex<UserState>>>>,
    next_id: AtomicU64,
    ledger: Mutex<TokenLedger>,
}

impl ProfileMemory {
    pub fn new(config: ProfileConfig, chat: Option<Arc<dyn ChatPort>>) -> Self {
        Self {
            config: ProfileConfig {
                batch_size: config.batch_size.max(1),
                ..config
            },
            chat,
            prompt: prompts::PROFILE.to_string(),
            users: RwLock::new(HashMap::new()),
            next_id: AtomicU64::new(0),
            ledger: Mutex::new(TokenLedger::new()),
        }
    }

    pub fn with_prompt(mut self, prompt: impl Into<String>) -> Self {
        self.prompt = prompt.into();
        self
    }

    pub fn config(&self) -> &ProfileConfig {
        &self.config
    }

    fn user(&self, scope: &UserScope) -> Arc<Mutex<UserState>> {
        if let Some(u) = self.users.read().get(scope) {
            return u.clone();
        }
        self.users.write().entry(scope.clone()).or_default().clone()
    }

    /// Feeds one episode to extraction. Returns entries created by this call
    /// (empty while a batch is still filling). On model failure the batch is
    /// kept for [`drain_pending`](Self::drain_pending).
    pub fn observe(&self, episode: &Episode) -> Result<Vec<ProfileEntry>, ProfileError> {
        if !self.config.enabled || (self.config.only_user && episode.producer != Producer::User) {
            return Ok(Vec::new());
        }
        let user = self.user(&episode.scope.user_scope());
        let mut state = user.lock();
        state.buffer.push(episode.clone());
        if state.buffer.len() < self.config.batch_size {
            return Ok(Vec::new());
        }
        let batch = std::mem::take(&mut state.buffer);
        self.extract(&mut state, batch)
    }

    /// Extracts from a partially filled batch right away.
    pub fn flush(&self, scope_user: &UserScope) -> Result<Vec<ProfileEntry>, ProfileError> {
        let user = self.user(scope_user);
        let mut state = user.lock();
        let batch = std::mem::take(&mut state.buffer);
        if batch.is_empty() {
            return Ok(Vec::new());
        }
        self.extract(&mut state, batch)
    }

    fn extract(&self, state: &mut UserState, batch: Vec<Episode>) -> Result<Vec<ProfileEntry>, ProfileError> {
        let Some(chat) = &self.chat else {
            state.failed.push(batch);
            return Err(ProfileError::LlmUnavailable("no chat provider configured".into()));
        };
        let content = if batch.len() == 1 {
            batch[0].content.clone()
        } else {
            batch
                .iter()
                .enumerate()
                .map(|(i, e)| format!("[{}] {}", i + 1, e.content))
                .collect::<Vec<_>>()
                .join("\n")
        };
        let prompt = prompts::fill(&self.prompt, &[("episode_content", &content)]);
        let completion = match chat.complete(&prompt, &ChatParams::default()) {
            Ok(c) => c,
            Err(e) => {
                self.ledger.lock().record_failed_call(LedgerNode::Profile);
                state.failed.push(batch);
                return Err(ProfileError::LlmUnavailable(e.to_string()));
            }
        };
        self.ledger.lock().record(LedgerNode::Profile, &completion);

        let mut created = Vec::new();
        // list order is time order when one reply disagrees with itself
        for fact in parse_facts(&completion.text) {
            let source = fact
                .message
                .and_then(|n| n.checked_sub(1))
                .and_then(|i| batch.get(i))
                .unwrap_or(&batch[batch.len() - 1]);
            if let Some(entry) = self.upsert(state, source, fact) {
                created.push(entry);
            }
        }
        Ok(created)
    }

    fn upsert(&self, state: &mut UserState, source: &Episode, fact: ExtractedFact) -> Option<ProfileEntry> {
        let live = state.live_index(fact.category, &fact.key);
        if let Some(i) = live {
            if state.entries[i].value == fact.value {
                return None;
            }
        }
        let entry = ProfileEntry {
            id: ProfileEntryId(self.next_id.fetch_add(1, Ordering::SeqCst)),
            scope_user: source.scope.user_scope(),
            category: fact.category,
            key: fact.key,
            value: fact.value,
            source_episode: source.id,
            source_session: source.scope.session_id.clone(),
            created_at: source.timestamp,
            superseded_by: None,
        };
        if let Some(i) = live {
            state.entries[i].superseded_by = Some(entry.id);
        }
        state.entries.push(entry.clone());
        Some(entry)
    }

    /// Live entries sorted by category, then key.
    pub fn query_profile(
        &self,
        scope_user: &UserScope,
        category: Option<Category>,
        key: Option<&str>,
    ) -> Vec<ProfileEntry> {
        let Some(user) = self.users.read().get(scope_user).cloned() else {
            return Vec::new();
        };
        let key = key.map(normalize_key);
        let state = user.lock();
        let mut out: Vec<ProfileEntry> = state
            .entries
            .iter()
            .filter(|e| e.is_live())
            .filter(|e| category.is_none_or(|c| e.category == c))
            .filter(|e| key.as_deref().is_none_or(|k| e.key == k))
            .cloned()
            .collect();
        out.sort_by(|a, b| (a.category, &a.key).cmp(&(b.category, &b.key)));
        out
    }

    /// Every entry ever recorded for (category, key), oldest first.
    pub fn history(&self, scope_user: &UserScope, category: Category, key: &str) -> Vec<ProfileEntry> {
        let Some(user) = self.users.read().get(scope_user).cloned() else {
            return Vec::new();
        };
        let key = normalize_key(key);
        let state = user.lock();
        let by_id: HashMap<ProfileEntryId, &ProfileEntry> = state
            .entries
            .iter()
            .filter(|e| e.category == category && e.key == key)
            .map(|e| (e.id, e))
            .collect();
        let successors: std::collections::HashSet<ProfileEntryId> =
            by_id.values().filter_map(|e| e.superseded_by).collect();
        // walk from the single entry nobody points to
        let mut head = by_id.values().find(|e| !successors.contains(&e.id)).copied();
        let mut out = Vec::new();
        while let Some(entry) = head {
            out.push(entry.clone());
            head = entry.superseded_by.and_then(|id| by_id.get(&id).copied());
            if out.len() > by_id.len() {
                break;
            }
        }
        out
    }

    /// Batches waiting for a retry after a failed extraction call.
    pub fn pending(&self) -> usize {
        self.users.read().values().map(|u| u.lock().failed.len()).sum()
    }

    /// Retries every failed batch once.
    pub fn drain_pending(&self) -> DrainReport {
        let users: Vec<_> = self.users.read().values().cloned().collect();
        let mut report = DrainReport::default();
        for user in users {
            let mut state = user.lock();
            for batch in std::mem::take(&mut state.failed) {
                let n = batch.len();
                if self.extract(&mut state, batch).is_ok() {
                    report.observed += n;
                }
            }
        }
        report.still_pending = self.pending();
        report
    }

    /// Drops entries and queued episodes sourced from the session, then
    /// relinks each remaining (category, key) history in creation order.
    pub fn remove_session(&self, scope: &MemoryScope) -> usize {
        let Some(user) = self.users.read().get(&scope.user_scope()).cloned() else {
            return 0;
        };
        let mut state = user.lock();
        let from_session = |e: &Episode| e.scope == *scope;
        state.buffer.retain(|e| !from_session(e));
        for batch in state.failed.iter_mut() {
            batch.retain(|e| !from_session(e));
        }
        state.failed.retain(|b| !b.is_empty());

        let before = state.entries.len();
        state.entries.retain(|e| e.source_session != scope.session_id);
        let removed = before - state.entries.len();

        let mut chains: BTreeMap<(Category, String), Vec<usize>> = BTreeMap::new();
        for (i, e) in state.entries.iter().enumerate() {
            chains.entry((e.category, e.key.clone())).or_default().push(i);
        }
        for (_, mut idx) in chains {
            idx.sort_by_key(|i| state.entries[*i].id);
            for w in idx.windows(2) {
                let next = state.entries[w[1]].id;
                state.entries[w[0]].superseded_by = Some(next);
            }
            if let Some(last) = idx.last() {
                state.entries[*last].superseded_by = None;
            }
        }
        removed
    }

    pub fn ledger(&self) -> TokenLedger {
        self.ledger.lock().clone()
    }
}
