//! Reply grammars of the router, sufficiency and decomposition prompts.

use super::Route;
use crate::prompts::{first_tagged, tagged_values};

/// `ROUTE:` value, or `None` when the reply names no known route.
pub fn parse_route(reply: &str) -> Option<(Route, String)> {
    let value = first_tagged(reply, "ROUTE")?;
    let word = value
        .split(|c: char| !c.is_alphanumeric() && c != '-' && c != '_')
        .find(|w| !w.is_empty())?;
    let route = word.parse().ok()?;
    let rationale = first_tagged(reply, "RATIONALE").unwrap_or("").to_string();
    Some((route, rationale))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sufficiency {
    pub sufficient: bool,
    /// Clamped to `[0, 1]`; zero when missing or unreadable.
    pub confidence: f64,
    pub next_query: Option<String>,
}

/// `None` when the reply has no readable `SUFFICIENT:` line.
pub fn parse_sufficiency(reply: &str) -> Option<Sufficiency> {
    let flag = first_tagged(reply, "SUFFICIENT")?;
    let sufficient = match flag.split_whitespace().next()?.trim_end_matches(['.', ',']).to_lowercase().as_str() {
        "yes" | "true" | "y" => true,
        "no" | "false" | "n" => false,
        _ => return None,
    };
    let confidence = first_tagged(reply, "CONFIDENCE")
        .and_then(|v| v.split_whitespace().next())
        .and_then(|v| v.trim_end_matches(['.', ',']).parse::<f64>().ok())
        .filter(|c| !c.is_nan())
        .map(|c| c.clamp(0.0, 1.0))
        .unwrap_or(0.0);
    let next_query = first_tagged(reply, "NEXT_QUERY")
        .map(str::trim)
        .filter(|q| !q.is_empty() && !q.eq_ignore_ascii_case("none"))
        .map(str::to_string);
    Some(Sufficiency {
        sufficient,
        confidence,
        next_query,
    })
}

/// Non-empty `SUBQUERY:` values in order, exact repeats dropped.
pub fn parse_subqueries(reply: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for q in tagged_values(reply, "SUBQUERY") {
        if !q.is_empty() && !out.iter().any(|o| o == q) {
            out.push(q.to_string());
        }
    }
    out
}
