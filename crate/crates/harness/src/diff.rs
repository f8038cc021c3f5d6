//! Metric deltas between two evaluation reports over the same query set.

use serde::{Deserialize, Serialize};

use crate::error::HarnessError;
use crate::evaluate::EvalReport;

pub const DIFF_SCHEMA_VERSION: u32 = 1;

/// Aggregate metrics compared by [`diff`], in table order.
pub const METRICS: [&str; 7] = [
    "hit_rate",
    "mean_recall",
    "mean_context_tokens",
    "mean_llm_tokens",
    "total_llm_tokens",
    "llm_calls",
    "skipped",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffRow {
    pub metric: String,
    pub a: f64,
    pub b: f64,
    /// `b - a`.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryDelta {
    pub id: String,
    pub recall_a: f64,
    pub recall_b: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffReport {
    pub schema_version: u32,
    pub rows: Vec<DiffRow>,
    pub queries: Vec<QueryDelta>,
}

fn metric(report: &EvalReport, name: &str) -> f64 {
    let a = &report.aggregate;
    match name {
        "hit_rate" => a.hit_rate,
        "mean_recall" => a.mean_recall,
        "mean_context_tokens" => a.mean_context_tokens,
        "mean_llm_tokens" => a.mean_llm_tokens,
        "total_llm_tokens" => a.total_llm_tokens as f64,
        "llm_calls" => a.llm_calls as f64,
        "skipped" => a.skipped as f64,
        _ => unreachable!("unknown metric {name}"),
    }
}

fn query_set(report: &EvalReport) -> Vec<(String, String)> {
    let mut ids: Vec<(String, String)> = report
        .results
        .iter()
        .map(|r| (r.id.clone(), r.query.clone()))
        .chain(report.skipped.iter().map(|s| (s.id.clone(), String::new())))
        .collect();
    ids.sort();
    ids
}

pub fn diff(a: &EvalReport, b: &EvalReport) -> Result<DiffReport, HarnessError> {
    let (qa, qb) = (query_set(a), query_set(b));
    let ids = |q: &[(String, String)]| q.iter().map(|(id, _)| id.clone()).collect::<Vec<_>>();
    if ids(&qa) != ids(&qb) {
        return Err(HarnessError::MismatchedQuerySets(format!(
            "{} queries vs {} queries with different ids",
            qa.len(),
            qb.len()
        )));
    }
    for (x, y) in qa.iter().zip(&qb) {
        if !x.1.is_empty() && !y.1.is_empty() && x.1 != y.1 {
            return Err(HarnessError::MismatchedQuerySets(format!("query `{}` has different text", x.0)));
        }
    }
    let rows = METRICS
        .iter()
        .map(|m| {
            let (va, vb) = (metric(a, m), metric(b, m));
            DiffRow {
                metric: m.to_string(),
                a: va,
                b: vb,
                delta: vb - va,
            }
        })
        .collect();
    let queries = a
        .results
        .iter()
        .filter_map(|ra| {
            let rb = b.results.iter().find(|r| r.id == ra.id)?;
            Some(QueryDelta {
                id: ra.id.clone(),
                recall_a: ra.recall,
                recall_b: rb.recall,
                delta: rb.recall - ra.recall,
            })
        })
        .collect();
    Ok(DiffReport {
        schema_version: DIFF_SCHEMA_VERSION,
        rows,
        queries,
    })
}
