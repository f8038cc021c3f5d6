//! Text layout of retrieved memories.

use serde::{Deserialize, Serialize};

use super::EpisodeCluster;
use crate::types::Episode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormatStyle {
    /// Raw contents joined by line breaks.
    Plain,
    /// One line per message with escaped inner line breaks.
    #[default]
    StructuredLines,
}

/// Replaces real line breaks with the two-character sequence `\n`.
pub fn escape_line_breaks(text: &str) -> String {
    text.replace("\r\n", "\\n").replace(['\n', '\r'], "\\n")
}

pub fn episode_line(episode: &Episode, style: FormatStyle) -> String {
    match style {
        FormatStyle::Plain => format!("{}: {}", episode.producer, episode.content),
        FormatStyle::StructuredLines => format!(
            "[{}] {} @ {}: {}",
            episode.sequence,
            episode.producer,
            episode.timestamp,
            escape_line_breaks(&episode.content)
        ),
    }
}

/// Lays out summary, long-term clusters and the short-term window.
///
/// Sections appear only when non-empty: `SUMMARY:`, `MEMORIES:` (clusters in
/// the given order, separated by blank lines in structured style) and `RECENT:`.
pub fn render_context(
    summary: &str,
    clusters: &[EpisodeCluster],
    stm: &[Episode],
    style: FormatStyle,
) -> String {
    let mut sections: Vec<String> = Vec::new();
    if !summary.trim().is_empty() {
        let body = match style {
            FormatStyle::Plain => summary.trim().to_string(),
            FormatStyle::StructuredLines => escape_line_breaks(summary.trim()),
        };
        sections.push(format!("SUMMARY:\n{body}"));
    }
    if !clusters.is_empty() {
        let separator = match style {
            FormatStyle::Plain => "\n",
            FormatStyle::StructuredLines => "\n\n",
        };
        let body = clusters
            .iter()
            .map(|c| {
                c.members
                    .iter()
                    .map(|e| episode_line(e, style))
                    .collect::<Vec<_>>()
                    .join("\n")
            })
            .collect::<Vec<_>>()
            .join(separator);
        sections.push(format!("MEMORIES:\n{body}"));
    }
    if !stm.is_empty() {
        let body = stm
            .iter()
            .map(|e| episode_line(e, style))
            .collect::<Vec<_>>()
            .join("\n");
        sections.push(format!("RECENT:\n{body}"));
    }
    sections.join("\n\n")
}
