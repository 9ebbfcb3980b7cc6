//! Citation grounding for model output.
//!
//! Titles are expected in `**double asterisks**`. Each one is matched
//! against the corpus and its inner text rewritten as
//! `[[cite:<paper_id>|<surface>]]` or `[[unverified|<surface>]]`. The
//! asterisks and everything outside the mention are left as they were.

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::text;

/// Minimum token-set Jaccard for a non-exact title match.
pub const ACCEPT_THRESHOLD: f64 = 0.8;

const DELIMITER: &str = "**";
const CITE_OPEN: &str = "[[cite:";
const UNVERIFIED_OPEN: &str = "[[unverified|";
const CLOSE: &str = "]]";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CitationMention {
    pub surface_text: String,
    /// Byte offsets of the surface text in the response, end exclusive.
    pub span: (usize, usize),
    pub matched_id: Option<String>,
    pub match_score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundingReport {
    pub mentions: Vec<CitationMention>,
    pub ungrounded_count: usize,
}

/// Candidate titles: non-empty single-line `**...**` spans not already
/// carrying markup.
pub fn extract_mentions(response: &str) -> Vec<CitationMention> {
    let mut out = Vec::new();
    let mut pos = 0;
    while let Some(open) = response[pos..].find(DELIMITER).map(|i| pos + i) {
        let start = open + DELIMITER.len();
        let Some(end) = response[start..].find(DELIMITER).map(|i| start + i) else { break };
        let inner = &response[start..end];
        if inner.contains("[[") || inner.contains(CLOSE) {
            // Already marked up, or would be ambiguous once marked up.
            pos = end + DELIMITER.len();
            continue;
        }
        if !inner.trim().is_empty() && !inner.contains('\n') {
            out.push(CitationMention {
                surface_text: inner.to_string(),
                span: (start, end),
                matched_id: None,
                match_score: 0.0,
            });
            pos = end + DELIMITER.len();
        } else {
            // The closing delimiter may open the next candidate.
            pos = end;
        }
    }
    out
}

/// Exact normalized title match scores 1.0; otherwise the best Jaccard over
/// title token sets, accepted at or above [`ACCEPT_THRESHOLD`]. Ties go to
/// the earlier record.
pub fn match_title(surface: &str, corpus: &Corpus) -> (Option<String>, f64) {
    let normalized = text::normalize(surface);
    if normalized.is_empty() {
        return (None, 0.0);
    }
    if let Some(rec) = corpus.find_normalized_title(&normalized) {
        return (Some(rec.id.clone()), 1.0);
    }
    let tokens = text::token_set(surface);
    let mut best: Option<(usize, f64)> = None;
    for (i, entry) in corpus.title_entries().iter().enumerate() {
        let score = text::jaccard(&tokens, &entry.tokens);
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((i, score));
        }
    }
    match best {
        Some((i, score)) if score >= ACCEPT_THRESHOLD => (Some(corpus.records()[i].id.clone()), score),
        Some((_, score)) => (None, score),
        None => (None, 0.0),
    }
}

pub fn annotate(response: &str, corpus: &Corpus) -> (String, GroundingReport) {
    let mut mentions = extract_mentions(response);
    let mut out = String::with_capacity(response.len() + mentions.len() * 24);
    let mut last = 0;
    for m in &mut mentions {
        let (id, score) = match_title(&m.surface_text, corpus);
        m.matched_id = id;
        m.match_score = score;
        out.push_str(&response[last..m.span.0]);
        match &m.matched_id {
            Some(id) => {
                out.push_str(CITE_OPEN);
                out.push_str(id);
                out.push('|');
            }
            None => out.push_str(UNVERIFIED_OPEN),
        }
        out.push_str(&m.surface_text);
        out.push_str(CLOSE);
        last = m.span.1;
    }
    out.push_str(&response[last..]);
    let ungrounded_count = mentions.iter().filter(|m| m.matched_id.is_none()).count();
    (out, GroundingReport { mentions, ungrounded_count })
}

/// Removes cite and unverified markup, keeping surfaces.
pub fn strip_markup(marked: &str) -> String {
    let mut out = String::with_capacity(marked.len());
    let mut rest = marked;
    loop {
        let next = [rest.find(CITE_OPEN), rest.find(UNVERIFIED_OPEN)].into_iter().flatten().min();
        let Some(i) = next else {
            out.push_str(rest);
            return out;
        };
        let body_start = if rest[i..].starts_with(CITE_OPEN) {
            match rest[i + CITE_OPEN.len()..].find('|') {
                Some(bar) => i + CITE_OPEN.len() + bar + 1,
                None => {
                    out.push_str(rest);
                    return out;
                }
            }
        } else {
            i + UNVERIFIED_OPEN.len()
        };
        let Some(close) = rest[body_start..].find(CLOSE).map(|c| body_start + c) else {
            out.push_str(rest);
            return out;
        };
        out.push_str(&rest[..i]);
        out.push_str(&rest[body_start..close]);
        rest = &rest[close + CLOSE.len()..];
    }
}

/// Paper ids cited in marked text, in order of appearance.
pub fn cited_ids(marked: &str) -> Vec<String> {
    let mut ids = Vec::new();
    let mut rest = marked;
    while let Some(i) = rest.find(CITE_OPEN) {
        let tail = &rest[i + CITE_OPEN.len()..];
        match tail.find('|') {
            Some(bar) => {
                ids.push(tail[..bar].to_string());
                rest = &tail[bar..];
            }
            None => break,
        }
    }
    ids
}
