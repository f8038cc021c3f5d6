//! Query-set evaluation: retrieval recall against gold episodes plus token cost.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use mnemo_core::agent::{Executed, Route};
use mnemo_core::engine::RetrievalOverrides;
use mnemo_core::ledger::TokenLedger;
use mnemo_core::ltm::SearchFilter;
use mnemo_core::providers::{whitespace_tokens, ChatPort};
use mnemo_core::recall::RetrievalConfig;
use mnemo_core::{MemoryEngine, SearchOptions};
use serde::{Deserialize, Serialize};

use crate::answer::{score_answer, AnswerScore};
use crate::queries::{layer, GoldRef, QuerySpec};
use crate::transcript::ScopeTemplate;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Memory,
    Agent,
}

#[derive(Clone, Default)]
pub struct EvalOptions {
    pub mode: Option<Mode>,
    /// Worker threads; 0 and 1 both mean sequential.
    pub parallel: usize,
    pub template: ScopeTemplate,
    pub overrides: RetrievalOverrides,
    /// Enables the answer-quality hook for queries with a reference answer.
    pub answer_chat: Option<Arc<dyn ChatPort>>,
    pub suite: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub id: String,
    pub query: String,
    pub mode: Mode,
    pub gold: Vec<String>,
    /// Every returned episode as `session_id:sequence`, sorted.
    pub retrieved: Vec<String>,
    pub hit: bool,
    pub recall: f64,
    pub route: Option<Route>,
    pub executed: Option<Executed>,
    pub chain_iterations: Option<usize>,
    pub issued_queries: Vec<String>,
    pub context_tokens: u64,
    pub llm_tokens: u64,
    pub llm_calls: u64,
    pub ledger: TokenLedger,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<AnswerScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedQuery {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub queries: usize,
    pub skipped: usize,
    pub hits: usize,
    /// Fraction of queries whose gold set was fully retrieved.
    pub hit_rate: f64,
    pub mean_recall: f64,
    pub mean_context_tokens: f64,
    pub mean_llm_tokens: f64,
    pub total_llm_tokens: u64,
    pub llm_calls: u64,
    pub routes: BTreeMap<String, u64>,
    pub ledger: TokenLedger,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_answer_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suite: Option<String>,
    pub mode: Mode,
    pub retrieval: RetrievalConfig,
    pub results: Vec<QueryResult>,
    pub skipped: Vec<SkippedQuery>,
    pub aggregate: Aggregate,
}

enum Evaluated {
    Done(Box<QueryResult>),
    Skipped(SkippedQuery),
}

pub fn evaluate(engine: &MemoryEngine, queries: &[QuerySpec], opts: &EvalOptions) -> EvalReport {
    let n = queries.len();
    let slots: Mutex<Vec<Option<Evaluated>>> = Mutex::new((0..n).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let work = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        if i >= n {
            break;
        }
        let r = evaluate_one(engine, i, &queries[i], opts);
        slots.lock().expect("slot lock")[i] = Some(r);
    };
    let workers = opts.parallel.clamp(1, n.max(1));
    if workers == 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(work);
            }
        });
    }

    let mut results = Vec::new();
    let mut skipped = Vec::new();
    for slot in slots.into_inner().expect("slot lock") {
        match slot.expect("every query evaluated") {
            Evaluated::Done(r) => results.push(*r),
            Evaluated::Skipped(s) => skipped.push(s),
        }
    }
    let mode = opts.mode.unwrap_or(Mode::Memory);
    EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        suite: opts.suite.clone(),
        mode,
        retrieval: opts.overrides.apply(&engine.config().retrieval),
        aggregate: aggregate(&results, skipped.len()),
        results,
        skipped,
    }
}

fn evaluate_one(engine: &MemoryEngine, index: usize, spec: &QuerySpec, opts: &EvalOptions) -> Evaluated {
    let id = spec.name(index);
    let skip = |reason: String| {
        eprintln!("warning: skipping query {id}: {reason}");
        Evaluated::Skipped(SkippedQuery { id: id.clone(), reason })
    };

    let mut gold = Vec::new();
    for raw in &spec.gold_episode_ids {
        let Some(r) = GoldRef::parse(raw) else {
            return skip(format!("malformed gold reference `{raw}`"));
        };
        let scope = opts.template.scope(&r.session_id);
        if engine.store().get_range(&scope, r.sequence, r.sequence).map_or(true, |v| v.is_empty()) {
            return skip(format!("gold reference `{raw}` is not in the store"));
        }
        gold.push(r);
    }
    let session = match spec.session_id.clone().or_else(|| gold.first().map(|g| g.session_id.clone())) {
        Some(s) => s,
        None => return skip("no session_id and no gold reference to take it from".into()),
    };

    let mode = match spec.agent_mode {
        Some(true) => Mode::Agent,
        Some(false) => Mode::Memory,
        None => opts.mode.unwrap_or(Mode::Memory),
    };
    let options = SearchOptions {
        agent_mode: mode == Mode::Agent,
        config: layer(&opts.overrides, &spec.config),
        filter: spec.filter.clone().unwrap_or(SearchFilter {
            all_sessions: true,
            ..SearchFilter::default()
        }),
    };
    let gold_set: BTreeSet<GoldRef> = gold.iter().cloned().collect();
    let gold_strings: Vec<String> = gold_set.iter().map(ToString::to_string).collect();

    let mut result = QueryResult {
        id,
        query: spec.query.clone(),
        mode,
        gold: gold_strings,
        retrieved: Vec::new(),
        hit: false,
        recall: 0.0,
        route: None,
        executed: None,
        chain_iterations: None,
        issued_queries: Vec::new(),
        context_tokens: 0,
        llm_tokens: 0,
        llm_calls: 0,
        ledger: TokenLedger::new(),
        answer: None,
        error: None,
    };
    match engine.search(&opts.template.scope(&session), &spec.query, &options) {
        Err(e) => result.error = Some(e.to_string()),
        Ok(found) => {
            let outcome = &found.outcome;
            let retrieved: BTreeSet<GoldRef> = outcome
                .stm_episodes
                .iter()
                .chain(outcome.ltm_clusters.iter().flat_map(|c| c.members.iter()))
                .map(|e| GoldRef {
                    session_id: e.scope.session_id.clone(),
                    sequence: e.sequence,
                })
                .collect();
            let found_gold = gold_set.intersection(&retrieved).count();
            result.hit = found_gold == gold_set.len();
            result.recall = if gold_set.is_empty() {
                1.0
            } else {
                found_gold as f64 / gold_set.len() as f64
            };
            result.retrieved = retrieved.iter().map(ToString::to_string).collect();
            result.route = found.route.as_ref().map(|r| r.route);
            result.executed = found.executed;
            result.chain_iterations = found.chain.as_ref().map(|c| c.iteration);
            result.issued_queries = found.queries.clone();
            result.context_tokens = whitespace_tokens(&outcome.rendered_context);
            let totals = outcome.ledger.totals();
            result.llm_tokens = totals.total_tokens();
            result.llm_calls = totals.calls;
            result.ledger = outcome.ledger.clone();
            if let (Some(chat), Some(reference)) = (&opts.answer_chat, &spec.reference_answer) {
                result.answer = score_answer(chat.as_ref(), &spec.query, &outcome.rendered_context, reference);
            }
        }
    }
    Evaluated::Done(Box::new(result))
}

fn aggregate(results: &[QueryResult], skipped: usize) -> Aggregate {
    let n = results.len();
    let mean = |f: &dyn Fn(&QueryResult) -> f64| {
        if n == 0 {
            0.0
        } else {
            results.iter().map(f).sum::<f64>() / n as f64
        }
    };
    let mut ledger = TokenLedger::new();
    let mut routes = BTreeMap::new();
    for r in results {
        ledger.merge(&r.ledger);
        if let Some(executed) = r.executed {
            let name = serde_json::to_value(executed)
                .ok()
                .and_then(|v| v.as_str().map(String::from))
                .unwrap_or_default();
            *routes.entry(name).or_insert(0) += 1;
        }
    }
    let answered: Vec<f64> = results.iter().filter_map(|r| r.answer.as_ref().map(|a| a.f1)).collect();
    let hits = results.iter().filter(|r| r.hit).count();
    Aggregate {
        queries: n,
        skipped,
        hits,
        hit_rate: if n == 0 { 0.0 } else { hits as f64 / n as f64 },
        mean_recall: mean(&|r| r.recall),
        mean_context_tokens: mean(&|r| r.context_tokens as f64),
        mean_llm_tokens: mean(&|r| r.llm_tokens as f64),
        total_llm_tokens: results.iter().map(|r| r.llm_tokens).sum(),
        llm_calls: results.iter().map(|r| r.llm_calls).sum(),
        routes,
        ledger,
        mean_answer_f1: if answered.is_empty() {
            None
        } else {
            Some(answered.iter().sum::<f64>() / answered.len() as f64)
        },
    }
}
