//! Named embedding spaces and the unit-normalized vectors registered in them.
//!
//! Every vector is L2-normalized at the boundary (on receipt from a provider,
//! on load from a file, on mock generation) so cosine similarity downstream is
//! a plain dot product. Zero vectors are rejected.

mod compose;
mod mock;
mod remote;

use std::collections::HashMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, IngestReport, Rejection};

pub use compose::{compose_document_text, compose_query_text};
pub use mock::{embed_mock, MockEmbedder, MOCK_SEED};
pub use remote::{
    EmbeddingTransport, HttpEmbeddingTransport, RemoteEmbedder, RemoteEmbeddingConfig, TransportError,
};

pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("embedding configuration error: {0}")]
    Config(String),
    #[error("embedding protocol error: {0}")]
    Protocol(String),
    #[error("embedding provider failed after retries for batches {failed_batches:?}: {message}")]
    Transient { failed_batches: Vec<usize>, message: String },
    #[error("dimension mismatch: space expects {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("zero vector cannot be normalized")]
    ZeroVector,
    #[error("vector has non-finite components")]
    NonFinite,
    #[error("space {space} has no text embedder ({provenance})")]
    NoEmbedder { space: String, provenance: String },
    #[error("unreadable embedding source: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Provenance {
    RemoteModel { model: String },
    PrecomputedFile,
    Mock,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Provenance::RemoteModel { model } => write!(f, "remote-model({model})"),
            Provenance::PrecomputedFile => f.write_str("precomputed-file"),
            Provenance::Mock => f.write_str("mock"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingSpace {
    pub name: String,
    pub dimension: usize,
    pub provenance: Provenance,
}

impl EmbeddingSpace {
    pub fn new(name: impl Into<String>, dimension: usize, provenance: Provenance) -> Self {
        Self { name: name.into(), dimension, provenance }
    }

    pub fn mock(name: impl Into<String>, dimension: usize) -> Self {
        Self::new(name, dimension, Provenance::Mock)
    }
}

/// A unit-length vector tagged with the space it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub space: String,
    pub components: Vec<f32>,
}

impl EmbeddingVector {
    /// Normalizes `raw` to unit length. The norm is taken in f64 so storage
    /// rounding is the only error left.
    pub fn normalized<T: Copy + Into<f64>>(space: impl Into<String>, raw: &[T]) -> Result<Self, EmbeddingError> {
        Ok(Self { space: space.into(), components: normalize(raw)? })
    }

    pub fn dimension(&self) -> usize {
        self.components.len()
    }

    pub fn norm(&self) -> f64 {
        self.components.iter().map(|&c| f64::from(c) * f64::from(c)).sum::<f64>().sqrt()
    }
}

pub fn normalize<T: Copy + Into<f64>>(raw: &[T]) -> Result<Vec<f32>, EmbeddingError> {
    let mut sq = 0.0f64;
    for &c in raw {
        let c: f64 = c.into();
        if !c.is_finite() {
            return Err(EmbeddingError::NonFinite);
        }
        sq += c * c;
    }
    let norm = sq.sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(EmbeddingError::ZeroVector);
    }
    Ok(raw.iter().map(|&c| (c.into() / norm) as f32).collect())
}

/// Produces vectors for free text in one space.
pub trait Embedder: Send + Sync {
    fn space(&self) -> &EmbeddingSpace;
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbeddingError>;

    fn embed_one(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        let mut v = self.embed(&[text.to_string()])?;
        v.pop().ok_or_else(|| EmbeddingError::Protocol("provider returned no vector".into()))
    }
}

/// All vectors of one space, stored row-major.
#[derive(Debug, Clone)]
pub struct SpaceVectors {
    space: EmbeddingSpace,
    ids: Vec<String>,
    data: Vec<f32>,
    row_of: HashMap<String, usize>,
}

impl SpaceVectors {
    pub fn new(space: EmbeddingSpace) -> Self {
        Self { space, ids: Vec::new(), data: Vec::new(), row_of: HashMap::new() }
    }

    pub fn space(&self) -> &EmbeddingSpace {
        &self.space
    }

    pub fn name(&self) -> &str {
        &self.space.name
    }

    pub fn dimension(&self) -> usize {
        self.space.dimension
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let d = self.space.dimension;
        &self.data[i * d..(i + 1) * d]
    }

    pub fn row_of(&self, id: &str) -> Option<usize> {
        self.row_of.get(id).copied()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.row_of.contains_key(id)
    }

    pub fn get(&self, id: &str) -> Option<EmbeddingVector> {
        self.row_of(id).map(|i| EmbeddingVector { space: self.space.name.clone(), components: self.row(i).to_vec() })
    }

    /// Adds a vector that is already unit length (or normalizes it).
    pub fn insert(&mut self, id: impl Into<String>, components: &[f32]) -> Result<(), EmbeddingError> {
        let id = id.into();
        if components.len() != self.space.dimension {
            return Err(EmbeddingError::DimensionMismatch { expected: self.space.dimension, actual: components.len() });
        }
        if self.row_of.contains_key(&id) {
            return Err(EmbeddingError::Protocol(format!("duplicate id {id}")));
        }
        let unit = normalize(components)?;
        self.row_of.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.data.extend_from_slice(&unit);
        Ok(())
    }

    pub fn insert_vector(&mut self, id: impl Into<String>, v: &EmbeddingVector) -> Result<(), EmbeddingError> {
        self.insert(id, &v.components)
    }

    /// Writes the space in the precomputed-vector file format.
    pub fn write_jsonl(&self, mut out: impl std::io::Write) -> std::io::Result<()> {
        for (i, id) in self.ids.iter().enumerate() {
            let row = VectorRow { id: id.clone(), vector: self.row(i).iter().map(|&c| f64::from(c)).collect() };
            serde_json::to_writer(&mut out, &row)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// One line of a precomputed-vector file.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorRow {
    pub id: String,
    pub vector: Vec<f64>,
}

/// Parses a precomputed-vector file. Rows for ids outside the corpus, rows
/// of the wrong dimension, and zero rows are rejected and reported.
pub fn load_precomputed(
    space: EmbeddingSpace,
    mut source: impl BufRead,
    corpus: &Corpus,
) -> Result<(SpaceVectors, IngestReport), EmbeddingError> {
    let mut contents = String::new();
    source.read_to_string(&mut contents)?;
    let lines: Vec<(usize, &str)> =
        contents.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()).map(|(i, l)| (i + 1, l)).collect();
    let dim = space.dimension;
    let parsed = crate::parallel::map_slice(&lines, |&(_, line)| -> Result<(String, Vec<f32>), String> {
        let row: VectorRow = serde_json::from_str(line).map_err(|e| format!("parse error: {e}"))?;
        if row.vector.len() != dim {
            return Err(format!("dimension mismatch: expected {dim}, got {}", row.vector.len()));
        }
        let unit = normalize(&row.vector).map_err(|e| e.to_string())?;
        Ok((row.id, unit))
    });
    let mut vectors = SpaceVectors::new(space);
    let mut report = IngestReport::default();
    for (&(line, _), result) in lines.iter().zip(parsed) {
        let outcome = result.and_then(|(id, unit)| {
            if !corpus.contains(&id) {
                return Err(format!("unknown paper id {id}"));
            }
            vectors.insert(id, &unit).map_err(|e| e.to_string())
        });
        match outcome {
            Ok(()) => report.accepted += 1,
            Err(reason) => report.rejected.push(Rejection { line, reason }),
        }
    }
    Ok((vectors, report))
}

/// Embeds every corpus record's composed text with `embedder`.
pub fn embed_corpus(embedder: &dyn Embedder, corpus: &Corpus) -> Result<SpaceVectors, EmbeddingError> {
    let texts: Vec<String> = crate::parallel::map_slice(corpus.records(), compose_document_text);
    let vectors = embedder.embed(&texts)?;
    let mut out = SpaceVectors::new(embedder.space().clone());
    for (rec, v) in corpus.records().iter().zip(&vectors) {
        out.insert_vector(rec.id.clone(), v)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn corpus() -> Corpus {
        let src = r#"{"id":"p1","title":"A"}
{"id":"p2","title":"B"}
{"id":"p3","title":"C"}"#;
        Corpus::new().ingested(Cursor::new(src)).unwrap().0
    }

    #[test]
    fn normalization_arithmetic() {
        let v = EmbeddingVector::normalized("s", &[3.0f32, 4.0]).unwrap();
        assert_eq!(v.components, vec![0.6, 0.8]);
        assert!(matches!(normalize(&[0.0f32, 0.0]), Err(EmbeddingError::ZeroVector)));
        assert!(matches!(normalize(&[f64::NAN, 1.0]), Err(EmbeddingError::NonFinite)));
    }

    #[test]
    fn precomputed_known_ids() {
        let space = EmbeddingSpace::new("glove", 2, Provenance::PrecomputedFile);
        let src = "{\"id\":\"p1\",\"vector\":[1,0]}\n{\"id\":\"p2\",\"vector\":[0,2]}\n{\"id\":\"p3\",\"vector\":[3,4]}\n";
        let (v, r) = load_precomputed(space, Cursor::new(src), &corpus()).unwrap();
        assert_eq!(r.accepted, 3);
        assert_eq!(v.len(), 3);
        assert_eq!(v.get("p2").unwrap().components, vec![0.0, 1.0]);
        for i in 0..v.len() {
            let n: f64 = v.row(i).iter().map(|&c| f64::from(c).powi(2)).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() <= NORM_TOLERANCE);
        }
    }

    #[test]
    fn precomputed_rejections() {
        let space = EmbeddingSpace::new("glove", 2, Provenance::PrecomputedFile);
        let (v, r) =
            load_precomputed(space.clone(), Cursor::new("{\"id\":\"nope\",\"vector\":[1,0]}\n"), &corpus()).unwrap();
        assert_eq!((v.len(), r.accepted, r.rejected.len()), (0, 0, 1));
        let (_, r) = load_precomputed(space.clone(), Cursor::new("{\"id\":\"p1\",\"vector\":[0,0]}\n"), &corpus()).unwrap();
        assert_eq!(r.rejected.len(), 1);
        assert!(r.rejected[0].reason.contains("zero"));
        let (_, r) =
            load_precomputed(space, Cursor::new("{\"id\":\"p1\",\"vector\":[1,0,0]}\n"), &corpus()).unwrap();
        assert!(r.rejected[0].reason.contains("dimension"));
    }

    #[test]
    fn jsonl_round_trip() {
        let mut v = SpaceVectors::new(EmbeddingSpace::new("s", 3, Provenance::PrecomputedFile));
        v.insert("p1", &[0.1, 0.2, 0.3]).unwrap();
        v.insert("p3", &[-1.0, 0.5, 0.25]).unwrap();
        let mut buf = Vec::new();
        v.write_jsonl(&mut buf).unwrap();
        let (back, r) = load_precomputed(v.space().clone(), Cursor::new(buf), &corpus()).unwrap();
        assert_eq!(r.accepted, 2);
        for id in ["p1", "p3"] {
            let (a, b) = (back.get(id).unwrap().components, v.get(id).unwrap().components);
            assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-7));
        }
    }
}
