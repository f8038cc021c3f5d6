//! Text tables and JSON files for evaluation and diff reports.

use std::fmt::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::diff::DiffReport;
use crate::error::HarnessError;
use crate::evaluate::{EvalReport, Mode};
use crate::ingest::IngestReport;

/// Left-aligned first column, right-aligned rest, two-space gutters.
pub fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut out = String::new();
        for (i, (cell, w)) in cells.iter().zip(&widths).enumerate() {
            if i > 0 {
                out.push_str("  ");
            }
            if i == 0 {
                let _ = write!(out, "{cell:<w$}");
            } else {
                let _ = write!(out, "{cell:>w$}");
            }
        }
        out.trim_end().to_string()
    };
    let mut out = line(header.to_vec());
    out.push('\n');
    out.push_str(&line(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(String::as_str).collect()));
    out.push('\n');
    for row in rows {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}

fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::Memory => "memory",
        Mode::Agent => "agent",
    }
}

pub fn eval_table(report: &EvalReport) -> String {
    let rows: Vec<Vec<String>> = report
        .results
        .iter()
        .map(|r| {
            vec![
                r.id.clone(),
                mode_name(r.mode).into(),
                if r.error.is_some() { "err".into() } else if r.hit { "yes".into() } else { "no".into() },
                format!("{:.3}", r.recall),
                r.gold.len().to_string(),
                r.retrieved.len().to_string(),
                r.executed
                    .and_then(|e| serde_json::to_value(e).ok())
                    .and_then(|v| v.as_str().map(String::from))
                    .unwrap_or_else(|| "-".into()),
                r.context_tokens.to_string(),
                r.llm_tokens.to_string(),
            ]
        })
        .collect();
    let mut out = table(
        &["query", "mode", "hit", "recall", "gold", "retrieved", "route", "ctx_tokens", "llm_tokens"],
        &rows,
    );
    let a = &report.aggregate;
    let r = &report.retrieval;
    out.push('\n');
    let _ = writeln!(
        out,
        "config: nucleus_k={} cluster_top_k={} neighbors=({},{})",
        r.nucleus_k, r.cluster_top_k, r.neighbors_before, r.neighbors_after
    );
    let _ = writeln!(
        out,
        "queries={} skipped={} hits={} hit_rate={:.3} mean_recall={:.3}",
        a.queries, a.skipped, a.hits, a.hit_rate, a.mean_recall
    );
    let _ = writeln!(
        out,
        "mean_ctx_tokens={:.1} mean_llm_tokens={:.1} total_llm_tokens={} llm_calls={}",
        a.mean_context_tokens, a.mean_llm_tokens, a.total_llm_tokens, a.llm_calls
    );
    if !a.routes.is_empty() {
        let routes: Vec<String> = a.routes.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let _ = writeln!(out, "routes: {}", routes.join(" "));
    }
    if let Some(f1) = a.mean_answer_f1 {
        let _ = writeln!(out, "mean_answer_f1={f1:.3}");
    }
    out
}

pub fn ingest_table(report: &IngestReport) -> String {
    let rows = vec![
        vec!["episodes".into(), report.episodes.to_string()],
        vec!["sentences".into(), report.sentences.to_string()],
        vec!["sessions".into(), report.sessions.to_string()],
        vec!["warnings".into(), report.warnings.len().to_string()],
        vec!["store_ms".into(), format!("{:.1}", report.store_ms)],
        vec!["stm_ms".into(), format!("{:.1}", report.stm_ms)],
        vec!["index_ms".into(), format!("{:.1}", report.index_ms)],
        vec!["profile_ms".into(), format!("{:.1}", report.profile_ms)],
        vec!["wall_ms".into(), format!("{:.1}", report.wall_ms)],
        vec!["episodes_per_sec".into(), format!("{:.1}", report.episodes_per_sec)],
    ];
    table(&["stat", "value"], &rows)
}

pub fn diff_table(report: &DiffReport) -> String {
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| vec![r.metric.clone(), fmt_num(r.a), fmt_num(r.b), format!("{:+.3}", r.delta)])
        .collect();
    table(&["metric", "a", "b", "delta"], &rows)
}

fn fmt_num(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{x:.0}")
    } else {
        format!("{x:.3}")
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    std::fs::write(path, to_json(value)).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, HarnessError> {
    let text = crate::error::read_file(path)?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Report(format!("{}: {e}", path.display())))
}
