use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::{whitespace_tokens, ChatParams, ChatPort, Completion, ProviderError};

/// Pattern rule: fires when the prompt contains `contains`.
///
/// Responses are handed out in order; the last one repeats.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptRule {
    pub contains: String,
    pub responses: Vec<String>,
}

type ResponderFn = dyn Fn(&str) -> Option<String> + Send + Sync;

enum Mode {
    Sequence(VecDeque<String>),
    Rules(Vec<(ScriptRule, usize)>),
    Func(Box<ResponderFn>),
    Unavailable,
}

/// Deterministic chat double with call counting and prompt capture.
///
/// Token counts are whitespace counts of prompt and response.
pub struct ScriptedChat {
    id: String,
    mode: Mutex<Mode>,
    prompts: Mutex<Vec<String>>,
    calls: AtomicU64,
}

impl std::fmt::Debug for ScriptedChat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScriptedChat")
            .field("id", &self.id)
            .field("calls", &self.call_count())
            .finish()
    }
}

impl ScriptedChat {
    fn with_mode(id: impl Into<String>, mode: Mode) -> Self {
        Self {
            id: id.into(),
            mode: Mutex::new(mode),
            prompts: Mutex::new(Vec::new()),
            calls: AtomicU64::new(0),
        }
    }

    /// Replies with `responses` in order, then fails with `ScriptExhausted`.
    pub fn sequence<I, S>(id: impl Into<String>, responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::with_mode(
            id,
            Mode::Sequence(responses.into_iter().map(Into::into).collect()),
        )
    }

    pub fn rules(id: impl Into<String>, rules: Vec<ScriptRule>) -> Self {
        Self::with_mode(id, Mode::Rules(rules.into_iter().map(|r| (r, 0)).collect()))
    }

    /// Computes each reply from the prompt; `None` means the script is exhausted.
    pub fn from_fn(
        id: impl Into<String>,
        f: impl Fn(&str) -> Option<String> + Send + Sync + 'static,
    ) -> Self {
        Self::with_mode(id, Mode::Func(Box::new(f)))
    }

    /// Always fails with `Unavailable`; still counts calls.
    pub fn unavailable(id: impl Into<String>) -> Self {
        Self::with_mode(id, Mode::Unavailable)
    }

    pub fn call_count(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().clone()
    }

    fn respond(&self, prompt: &str) -> Result<String, ProviderError> {
        let exhausted = || ProviderError::ScriptExhausted {
            port: self.id.clone(),
        };
        let mut mode = self.mode.lock();
        match &mut *mode {
            Mode::Sequence(queue) => queue.pop_front().ok_or_else(exhausted),
            Mode::Rules(rules) => {
                let (rule, cursor) = rules
                    .iter_mut()
                    .find(|(r, _)| prompt.contains(&r.contains))
                    .ok_or_else(exhausted)?;
                let reply = rule
                    .responses
                    .get((*cursor).min(rule.responses.len().saturating_sub(1)))
                    .cloned()
                    .ok_or_else(exhausted)?;
                *cursor += 1;
                Ok(reply)
            }
            Mode::Func(f) => f(prompt).ok_or_else(exhausted),
            Mode::Unavailable => Err(ProviderError::unavailable(&self.id, "scripted outage")),
        }
    }
}

impl ChatPort for ScriptedChat {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, prompt: &str, _params: &ChatParams) -> Result<Completion, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.prompts.lock().push(prompt.to_string());
        let text = self.respond(prompt)?;
        Ok(Completion {
            input_tokens: whitespace_tokens(prompt),
            output_tokens: whitespace_tokens(&text),
            text,
        })
    }
}
