//! Rule-based sentence segmentation.
//!
//! A boundary is placed after a run of terminal punctuation (`.`, `!`, `?`,
//! optionally followed by closing quotes or brackets) when the run is
//! followed by whitespace and then an uppercase letter or digit (optionally
//! behind an opening quote or bracket), or by the end of the text. A lone
//! period does not end a sentence when the word it terminates is a known
//! abbreviation or a single-letter initial.

use std::collections::BTreeSet;

/// Abbreviations shipped by default, lowercase with their trailing period.
pub const DEFAULT_ABBREVIATIONS: &[&str] = &[
    "dr.", "mr.", "mrs.", "ms.", "prof.", "st.", "jr.", "sr.", "mt.", "e.g.", "i.e.", "etc.",
    "vs.", "u.s.", "u.k.", "a.m.", "p.m.", "inc.", "ltd.", "jan.", "feb.", "mar.", "apr.",
    "jun.", "jul.", "aug.", "sep.", "sept.", "oct.", "nov.", "dec.",
];

pub fn default_abbreviations() -> BTreeSet<String> {
    DEFAULT_ABBREVIATIONS.iter().map(|s| s.to_string()).collect()
}

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '\u{201d}' | '\u{2019}')
}

fn is_opener(c: char) -> bool {
    matches!(c, '"' | '\'' | '(' | '[' | '\u{201c}' | '\u{2018}')
}

/// Splits `content` into trimmed, non-empty sentences in order.
///
/// `abbreviations` entries are compared case-insensitively and must include
/// their trailing period (`"dr."`). Text without a boundary yields one segment.
pub fn segment_sentences(content: &str, abbreviations: &BTreeSet<String>) -> Vec<String> {
    let chars: Vec<(usize, char)> = content.char_indices().collect();
    let mut out = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;

    while i < chars.len() {
        let (period_at, c) = chars[i];
        if !is_terminal(c) {
            i += 1;
            continue;
        }
        let mut j = i;
        while j + 1 < chars.len() && is_terminal(chars[j + 1].1) {
            j += 1;
        }
        let lone_period = c == '.' && j == i;
        while j + 1 < chars.len() && is_closer(chars[j + 1].1) {
            j += 1;
        }
        let end = chars[j].0 + chars[j].1.len_utf8();
        let next = j + 1;
        i = next;

        if next < chars.len() {
            if !chars[next].1.is_whitespace() {
                continue;
            }
            let mut m = next;
            while m < chars.len() && chars[m].1.is_whitespace() {
                m += 1;
            }
            if m < chars.len() {
                while m < chars.len() && is_opener(chars[m].1) {
                    m += 1;
                }
                let starts_sentence = chars
                    .get(m)
                    .is_some_and(|(_, ch)| ch.is_uppercase() || ch.is_ascii_digit());
                if !starts_sentence {
                    continue;
                }
            }
        }

        if lone_period && is_abbreviation(&content[start..=period_at], abbreviations) {
            continue;
        }

        push_trimmed(&mut out, &content[start..end]);
        start = end;
    }
    push_trimmed(&mut out, &content[start..]);
    out
}

/// Whether the last word of `text` (which ends with a period) is an abbreviation or an initial.
fn is_abbreviation(text: &str, abbreviations: &BTreeSet<String>) -> bool {
    let word = text
        .rsplit(char::is_whitespace)
        .next()
        .unwrap_or(text)
        .trim_start_matches(is_opener);
    if abbreviations.contains(&word.to_lowercase()) {
        return true;
    }
    let mut letters = word.trim_end_matches('.').chars();
    matches!((letters.next(), letters.next()), (Some(ch), None) if ch.is_alphabetic())
}

fn push_trimmed(out: &mut Vec<String>, piece: &str) {
    let piece = piece.trim();
    if !piece.is_empty() {
        out.push(piece.to_string());
    }
}
