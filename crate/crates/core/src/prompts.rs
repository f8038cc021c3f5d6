//! Versioned prompt assets and the line grammar their replies follow.
//!
//! Replies are parsed from tagged lines (`ROUTE:`, `RATIONALE:`, `SUFFICIENT:`,
//! `CONFIDENCE:`, `NEXT_QUERY:`, `SUBQUERY:`, `FACT:`). Tags are matched
//! case-insensitively at the start of a line; anything else is ignored.

use serde::{Deserialize, Serialize};

pub const PROMPT_VERSION: &str = "v1";

pub const ROUTER: &str = include_str!("../prompts/router.v1.txt");
pub const SUFFICIENCY: &str = include_str!("../prompts/sufficiency.v1.txt");
pub const SPLIT: &str = include_str!("../prompts/split.v1.txt");
pub const SUMMARY: &str = include_str!("../prompts/summary.v1.txt");
pub const PROFILE: &str = include_str!("../prompts/profile.v1.txt");

/// Prompt texts in use; any field may be replaced from configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptSet {
    pub router: String,
    pub sufficiency: String,
    pub split: String,
    pub summary: String,
    pub profile: String,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            router: ROUTER.to_string(),
            sufficiency: SUFFICIENCY.to_string(),
            split: SPLIT.to_string(),
            summary: SUMMARY.to_string(),
            profile: PROFILE.to_string(),
        }
    }
}

/// Replaces `{name}` placeholders. Unknown placeholders are left untouched.
pub fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (name, value) in values {
        out = out.replace(&format!("{{{name}}}"), value);
    }
    out
}

/// Values of every line tagged `tag:` (case-insensitive), trimmed, in order.
pub fn tagged_values<'a>(reply: &'a str, tag: &str) -> Vec<&'a str> {
    reply
        .lines()
        .filter_map(|line| {
            let line = line.trim_start().trim_start_matches(['-', '*']).trim_start();
            let (head, rest) = line.split_once(':')?;
            head.trim().eq_ignore_ascii_case(tag).then(|| rest.trim())
        })
        .collect()
}

pub fn first_tagged<'a>(reply: &'a str, tag: &str) -> Option<&'a str> {
    tagged_values(reply, tag).into_iter().next()
}
