use std::collections::HashSet;

use super::{IndexError, SearchHit, VectorSearch};
use crate::embedding::{compose_query_text, normalize, Embedder, EmbeddingVector};

/// Result count for similarity queries when the caller does not give one.
pub const DEFAULT_SIMILAR_K: usize = 25;

/// Component-wise mean of same-space vectors, re-normalized.
pub fn centroid_seed(vectors: &[EmbeddingVector]) -> Result<EmbeddingVector, IndexError> {
    let first = vectors.first().ok_or_else(|| IndexError::InvalidParameter("no seed vectors".into()))?;
    let dim = first.components.len();
    let mut mean = vec![0.0f64; dim];
    for v in vectors {
        if v.space != first.space {
            return Err(IndexError::SpaceMismatch(first.space.clone(), v.space.clone()));
        }
        if v.components.len() != dim {
            return Err(IndexError::DimensionMismatch { expected: dim, actual: v.components.len() });
        }
        for (m, &c) in mean.iter_mut().zip(&v.components) {
            *m += f64::from(c);
        }
    }
    let n = vectors.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    // Antipodal seeds leave only rounding noise behind.
    let norm = mean.iter().map(|m| m * m).sum::<f64>().sqrt();
    if norm < 1e-9 {
        return Err(IndexError::DegenerateSeed);
    }
    let components = normalize(&mean).map_err(|_| IndexError::DegenerateSeed)?;
    Ok(EmbeddingVector { space: first.space.clone(), components })
}

/// Papers similar to a list of seed papers: search around the seeds'
/// centroid, seeds excluded, then drop hits scoring at or below `threshold`.
pub fn similar_by_papers(
    index: &dyn VectorSearch,
    seed_ids: &[String],
    k: usize,
    threshold: Option<f32>,
) -> Result<Vec<SearchHit>, IndexError> {
    if seed_ids.is_empty() {
        return Err(IndexError::InvalidParameter("at least one seed paper is required".into()));
    }
    let vectors = index.vectors();
    let seeds: Vec<EmbeddingVector> = seed_ids
        .iter()
        .map(|id| vectors.get(id).ok_or_else(|| IndexError::MissingEmbedding(id.clone(), vectors.name().to_string())))
        .collect::<Result<_, _>>()?;
    let centroid = centroid_seed(&seeds)?;
    let exclude: HashSet<String> = seed_ids.iter().cloned().collect();
    let mut hits = index.search(&centroid, k, &exclude)?;
    if let Some(t) = threshold {
        hits.retain(|h| h.score > t);
    }
    Ok(hits)
}

/// Papers similar to a work-in-progress title and abstract.
pub fn similar_by_text(
    index: &dyn VectorSearch,
    embedder: &dyn Embedder,
    title: &str,
    abstract_text: &str,
    k: usize,
) -> Result<Vec<SearchHit>, IndexError> {
    if title.trim().is_empty() && abstract_text.trim().is_empty() {
        return Err(IndexError::InvalidParameter("title or abstract must be non-empty".into()));
    }
    if embedder.space().name != index.vectors().name() {
        return Err(IndexError::SpaceMismatch(embedder.space().name.clone(), index.vectors().name().to_string()));
    }
    let seed = embedder.embed_one(&compose_query_text(title, abstract_text))?;
    index.search(&seed, k, &HashSet::new())
}
