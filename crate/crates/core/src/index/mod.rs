//! Cosine similarity search over one embedding space: an exact full scan
//! (the ground truth) and an approximate proximity-graph index.

mod ann;
mod similarity;

use std::collections::HashSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{EmbeddingError, EmbeddingVector, SpaceVectors};

pub use ann::{mean_recall, AnnIndex, AnnIndexConfig, ANN_FORMAT_VERSION};
pub use similarity::{centroid_seed, similar_by_papers, similar_by_text, DEFAULT_SIMILAR_K};

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("space mismatch: {0} vs {1}")]
    SpaceMismatch(String, String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate seed: the seed vectors cancel out")]
    DegenerateSeed,
    #[error("paper {0} has no vector in space {1}")]
    MissingEmbedding(String, String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("index file error: {0}")]
    Format(String),
    #[error("index io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One similarity-query result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub paper_id: String,
    pub score: f32,
}

/// Dot product accumulated in f64. Summation order is fixed, so
/// `dot(a, b) == dot(b, a)` bit for bit.
#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = i * 4;
        acc[0] += f64::from(a[j]) * f64::from(b[j]);
        acc[1] += f64::from(a[j + 1]) * f64::from(b[j + 1]);
        acc[2] += f64::from(a[j + 2]) * f64::from(b[j + 2]);
        acc[3] += f64::from(a[j + 3]) * f64::from(b[j + 3]);
    }
    let mut tail = 0.0;
    for j in chunks * 4..a.len() {
        tail += f64::from(a[j]) * f64::from(b[j]);
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Score on the reported scale: f32, clamped to [-1, 1].
#[inline]
pub(crate) fn score(a: &[f32], b: &[f32]) -> f32 {
    (dot(a, b) as f32).clamp(-1.0, 1.0)
}

/// Cosine similarity of two unit vectors of the same space.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f32, IndexError> {
    if a.space != b.space {
        return Err(IndexError::SpaceMismatch(a.space.clone(), b.space.clone()));
    }
    if a.components.len() != b.components.len() {
        return Err(IndexError::DimensionMismatch { expected: a.components.len(), actual: b.components.len() });
    }
    Ok(score(&a.components, &b.components))
}

/// Result ordering: score desc, then paper id asc.
pub(crate) fn hit_order(a: &SearchHit, b: &SearchHit) -> std::cmp::Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.paper_id.cmp(&b.paper_id))
}

/// Anything that answers top-k similarity queries over a space.
pub trait VectorSearch: Send + Sync {
    fn vectors(&self) -> &SpaceVectors;
    fn search(&self, seed: &EmbeddingVector, k: usize, exclude: &HashSet<String>) -> Result<Vec<SearchHit>, IndexError>;
}

pub(crate) fn check_seed(vectors: &SpaceVectors, seed: &EmbeddingVector, k: usize) -> Result<(), IndexError> {
    if seed.space != vectors.name() {
        return Err(IndexError::SpaceMismatch(seed.space.clone(), vectors.name().to_string()));
    }
    if seed.components.len() != vectors.dimension() {
        return Err(IndexError::DimensionMismatch { expected: vectors.dimension(), actual: seed.components.len() });
    }
    if k == 0 {
        return Err(IndexError::InvalidParameter("k must be at least 1".into()));
    }
    Ok(())
}

/// Full-scan search over a space.
#[derive(Debug, Clone)]
pub struct ExactIndex {
    vectors: Arc<SpaceVectors>,
}

impl ExactIndex {
    pub fn new(vectors: Arc<SpaceVectors>) -> Self {
        Self { vectors }
    }

    pub fn shared_vectors(&self) -> &Arc<SpaceVectors> {
        &self.vectors
    }
}

const SCAN_CHUNK: usize = 1024;

/// The k highest-cosine rows not in `exclude`, by full scan.
pub fn search_exact(
    vectors: &SpaceVectors,
    seed: &EmbeddingVector,
    k: usize,
    exclude: &HashSet<String>,
) -> Result<Vec<SearchHit>, IndexError> {
    check_seed(vectors, seed, k)?;
    if vectors.is_empty() {
        return Ok(Vec::new());
    }
    let q = &seed.components;
    let ids = vectors.ids();
    let rows: Vec<usize> = (0..vectors.len()).collect();
    let per_chunk = crate::parallel::map_chunks(&rows, SCAN_CHUNK, |chunk| {
        let mut local: Vec<SearchHit> = chunk
            .iter()
            .filter(|&&r| !exclude.contains(&ids[r]))
            .map(|&r| SearchHit { paper_id: ids[r].clone(), score: score(q, vectors.row(r)) })
            .collect();
        top_k(&mut local, k);
        local
    });
    let mut merged: Vec<SearchHit> = per_chunk.into_iter().flatten().collect();
    top_k(&mut merged, k);
    Ok(merged)
}

/// Keeps the best `k` hits in `hits`, sorted.
pub(crate) fn top_k(hits: &mut Vec<SearchHit>, k: usize) {
    if hits.len() > k {
        hits.select_nth_unstable_by(k - 1, hit_order);
        hits.truncate(k);
    }
    hits.sort_by(hit_order);
}

impl VectorSearch for ExactIndex {
    fn vectors(&self) -> &SpaceVectors {
        &self.vectors
    }

    fn search(&self, seed: &EmbeddingVector, k: usize, exclude: &HashSet<String>) -> Result<Vec<SearchHit>, IndexError> {
        search_exact(&self.vectors, seed, k, exclude)
    }
}
