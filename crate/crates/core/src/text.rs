//! Tokenization and normalization shared by keyword search, deduplication,
//! title matching, and the mock embedder.

use std::collections::HashSet;

/// Splits on Unicode whitespace and punctuation, lowercases, no stemming.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| c.is_whitespace() || is_separator(c))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Lowercased, punctuation-stripped, whitespace-collapsed form of `text`.
pub fn normalize(text: &str) -> String {
    tokenize(text).join(" ")
}

/// Collapses whitespace runs to single spaces and trims.
pub fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn token_set(text: &str) -> HashSet<String> {
    tokenize(text).into_iter().collect()
}

/// Jaccard index of two token sets. Two empty sets score 0.
pub fn jaccard(a: &HashSet<String>, b: &HashSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

fn is_separator(c: char) -> bool {
    // Anything that is neither a letter nor a digit separates tokens.
    !c.is_alphanumeric()
}
