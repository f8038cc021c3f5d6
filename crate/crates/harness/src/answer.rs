//! Optional answer-quality hook: a chat model answers from the retrieved
//! context and the answer is scored against a reference with token F1 and
//! unigram BLEU. Off unless a chat model is supplied.

use std::collections::HashMap;

use mnemo_core::prompts::fill;
use mnemo_core::providers::{ChatParams, ChatPort};
use serde::{Deserialize, Serialize};

pub const ANSWER_PROMPT: &str = "Answer the question using only the memory context.\n\
Reply with a short phrase and nothing else.\n\nContext:\n{context}\n\nQuestion: {question}\nAnswer:";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerScore {
    pub answer: String,
    pub f1: f64,
    pub bleu1: f64,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn counts(tokens: &[String]) -> HashMap<&str, usize> {
    let mut m = HashMap::new();
    for t in tokens {
        *m.entry(t.as_str()).or_insert(0) += 1;
    }
    m
}

fn clipped_overlap(candidate: &[String], reference: &[String]) -> usize {
    let r = counts(reference);
    counts(candidate)
        .into_iter()
        .map(|(t, n)| n.min(*r.get(t).unwrap_or(&0)))
        .sum()
}

/// Token-level F1 over lowercase alphanumeric tokens.
pub fn token_f1(candidate: &str, reference: &str) -> f64 {
    let (c, r) = (tokens(candidate), tokens(reference));
    if c.is_empty() || r.is_empty() {
        return if c.is_empty() && r.is_empty() { 1.0 } else { 0.0 };
    }
    let common = clipped_overlap(&c, &r) as f64;
    if common == 0.0 {
        return 0.0;
    }
    let precision = common / c.len() as f64;
    let recall = common / r.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Unigram BLEU with brevity penalty.
pub fn bleu1(candidate: &str, reference: &str) -> f64 {
    let (c, r) = (tokens(candidate), tokens(reference));
    if c.is_empty() {
        return 0.0;
    }
    let precision = clipped_overlap(&c, &r) as f64 / c.len() as f64;
    let bp = if c.len() >= r.len() {
        1.0
    } else {
        (1.0 - r.len() as f64 / c.len() as f64).exp()
    };
    bp * precision
}

pub fn score_answer(chat: &dyn ChatPort, question: &str, context: &str, reference: &str) -> Option<AnswerScore> {
    let prompt = fill(ANSWER_PROMPT, &[("context", context), ("question", question)]);
    let completion = chat.complete(&prompt, &ChatParams::default()).ok()?;
    let answer = completion.text.trim().to_string();
    Some(AnswerScore {
        f1: token_f1(&answer, reference),
        bleu1: bleu1(&answer, reference),
        answer,
        input_tokens: completion.input_tokens,
        output_tokens: completion.output_tokens,
    })
}
