//! Reading and writing a data directory, and wiring a [`Library`] from
//! configuration. The CLI verbs and the service startup are calls into here.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;

use crate::config::{Config, DataLayout, EmbeddingProvider, LlmProvider};
use crate::corpus::{Corpus, IngestReport};
use crate::embedding::{
    embed_corpus, load_precomputed, Embedder, EmbeddingSpace, MockEmbedder, Provenance, RemoteEmbedder, SpaceVectors,
};
use crate::index::{AnnIndex, VectorSearch};
use crate::library::{ErrorKind, Library, LibraryError, LibraryResult, Space};
use crate::llm::{LanguageModel, RemoteLlm, ScriptedLlm};
use crate::projection::load_precomputed_projection;
use crate::rag::SessionStore;
use crate::sample;
use crate::saved::SavedSetStore;
use crate::templates::TemplateStore;

fn io_err(path: &Path, e: impl std::fmt::Display) -> LibraryError {
    LibraryError::new(ErrorKind::Internal, format!("{}: {e}", path.display()))
}

fn open(path: &Path) -> LibraryResult<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => LibraryError::not_found(format!("{} does not exist", path.display())),
        _ => io_err(path, e),
    })
}

fn create(path: &Path) -> LibraryResult<std::io::BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    File::create(path).map(std::io::BufWriter::new).map_err(|e| io_err(path, e))
}

pub fn read_corpus(path: &Path) -> LibraryResult<(Corpus, IngestReport)> {
    Ok(Corpus::new().ingested(open(path)?)?)
}

pub fn write_corpus(corpus: &Corpus, mut out: impl Write) -> std::io::Result<()> {
    for r in corpus.records() {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> LibraryResult<()> {
    write_corpus(corpus, create(path)?).map_err(|e| io_err(path, e))
}

/// Dimension of a precomputed-vector file, taken from its first row.
fn sniff_dimension(path: &Path) -> LibraryResult<usize> {
    for line in open(path)?.lines() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value = serde_json::from_str(&line)
            .map_err(|e| LibraryError::bad_request(format!("{}: first row is not JSON: {e}", path.display())))?;
        return v
            .get("vector")
            .and_then(|v| v.as_array())
            .map(Vec::len)
            .filter(|&d| d > 0)
            .ok_or_else(|| LibraryError::bad_request(format!("{}: first row has no vector", path.display())));
    }
    Err(LibraryError::bad_request(format!("{} has no vectors", path.display())))
}

/// Loads a precomputed-vector file for `space`. The dimension comes from the
/// file itself.
pub fn read_vectors(
    path: &Path,
    space: &str,
    provenance: Provenance,
    corpus: &Corpus,
) -> LibraryResult<(SpaceVectors, IngestReport)> {
    let dim = sniff_dimension(path)?;
    Ok(load_precomputed(EmbeddingSpace::new(space, dim, provenance), open(path)?, corpus)?)
}

pub fn save_vectors(vectors: &SpaceVectors, path: &Path) -> LibraryResult<()> {
    let mut out = create(path)?;
    vectors.write_jsonl(&mut out).and_then(|_| out.flush()).map_err(|e| io_err(path, e))
}

pub fn provenance(config: &Config) -> Provenance {
    match config.embedding.provider {
        EmbeddingProvider::Mock => Provenance::Mock,
        EmbeddingProvider::Remote => Provenance::RemoteModel { model: config.embedding.model.clone() },
        EmbeddingProvider::Precomputed => Provenance::PrecomputedFile,
    }
}

/// The text embedder for a space of the configured provider, if it has one.
pub fn embedder(config: &Config, space: &str, dimension: usize) -> LibraryResult<Option<Arc<dyn Embedder>>> {
    Ok(match config.embedding.provider {
        EmbeddingProvider::Mock => Some(Arc::new(MockEmbedder::new(EmbeddingSpace::mock(space, dimension)))),
        EmbeddingProvider::Remote => {
            let mut c = config.remote_embedding();
            c.dimension = dimension;
            Some(Arc::new(RemoteEmbedder::new(space, c)?))
        }
        EmbeddingProvider::Precomputed => None,
    })
}

pub fn language_model(config: &Config, force_mock: bool) -> LibraryResult<Arc<dyn LanguageModel>> {
    if force_mock || config.llm.provider == LlmProvider::Mock {
        return Ok(Arc::new(ScriptedLlm::new()));
    }
    Ok(Arc::new(RemoteLlm::new(config.remote_llm())?))
}

/// Embeds the whole corpus with the configured provider and writes the
/// space's vector file.
pub fn embed_space(config: &Config, corpus: &Corpus, space: &str) -> LibraryResult<SpaceVectors> {
    let e = embedder(config, space, config.embedding.dimension)?.ok_or_else(|| {
        LibraryError::bad_request("the precomputed provider cannot embed; supply a vector file instead")
    })?;
    let vectors = embed_corpus(e.as_ref(), corpus)?;
    save_vectors(&vectors, &config.layout().embeddings(space))?;
    Ok(vectors)
}

/// Builds the approximate index for a space and writes it to the layout.
pub fn build_index(config: &Config, vectors: Arc<SpaceVectors>) -> LibraryResult<AnnIndex> {
    let index = AnnIndex::build(vectors, config.ann())?;
    let path = config.layout().index(index.vectors().name());
    let mut out = create(&path)?;
    index.save(&mut out)?;
    out.flush().map_err(|e| io_err(&path, e))?;
    Ok(index)
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleWritten {
    pub records: usize,
    pub corpus: PathBuf,
    pub embeddings: PathBuf,
}

/// Writes a generated corpus and its mock vectors into the layout.
pub fn write_sample(layout: &DataLayout, n: usize, seed: u64, space: &str, dimension: usize) -> LibraryResult<SampleWritten> {
    if n < 1 {
        return Err(LibraryError::bad_request("--n must be at least 1"));
    }
    let (corpus, _) = Corpus::from_records(sample::generate(n, seed).records);
    save_corpus(&corpus, &layout.corpus())?;
    let vectors = embed_corpus(&MockEmbedder::new(EmbeddingSpace::mock(space, dimension)), &corpus)?;
    save_vectors(&vectors, &layout.embeddings(space))?;
    Ok(SampleWritten { records: corpus.len(), corpus: layout.corpus(), embeddings: layout.embeddings(space) })
}

/// Where to load from; unset paths fall back to the data layout.
#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub corpus: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub projection: Option<PathBuf>,
    pub space: Option<String>,
    pub mock_llm: bool,
    /// Keep templates, saved sets and sessions in memory only.
    pub ephemeral: bool,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct LoadReport {
    pub corpus: IngestReport,
    pub vectors: Option<IngestReport>,
    pub projection: Option<IngestReport>,
    pub approximate_index: bool,
}

/// Opens the corpus, one embedding space (with its saved index and
/// projection when present) and the persistent stores.
///
/// With the mock provider and no vector file, vectors are computed in
/// memory.
pub fn open_library(config: &Config, opts: &LoadOptions) -> LibraryResult<(Library, LoadReport)> {
    let layout = config.layout();
    let space_name = opts.space.clone().unwrap_or_else(|| config.embedding.space.clone());
    let corpus_path = opts.corpus.clone().unwrap_or_else(|| layout.corpus());
    let (corpus, corpus_report) = read_corpus(&corpus_path)?;
    let mut report = LoadReport { corpus: corpus_report, ..Default::default() };

    let vec_path = opts.embeddings.clone().unwrap_or_else(|| layout.embeddings(&space_name));
    let vectors = if vec_path.exists() || opts.embeddings.is_some() {
        let (v, r) = read_vectors(&vec_path, &space_name, provenance(config), &corpus)?;
        report.vectors = Some(r);
        v
    } else if config.embedding.provider == EmbeddingProvider::Mock {
        let e = MockEmbedder::new(EmbeddingSpace::mock(&space_name, config.embedding.dimension));
        embed_corpus(&e, &corpus)?
    } else {
        return Err(LibraryError::not_found(format!(
            "no vectors for space {space_name} at {}; run `paperscope embed` first",
            vec_path.display()
        )));
    };
    let vectors = Arc::new(vectors);

    let index_path = layout.index(&space_name);
    let search: Option<Arc<dyn VectorSearch>> = if index_path.exists() {
        report.approximate_index = true;
        Some(Arc::new(AnnIndex::load(open(&index_path)?, vectors.clone())?))
    } else {
        None
    };

    let proj_path = opts.projection.clone().unwrap_or_else(|| layout.projection(&space_name));
    let projection = if proj_path.exists() || opts.projection.is_some() {
        let (table, r) = load_precomputed_projection(open(&proj_path)?, &corpus)?;
        report.projection = Some(r);
        Some(table)
    } else {
        None
    };

    let text_embedder = embedder(config, &space_name, vectors.dimension())?;
    let llm = language_model(config, opts.mock_llm)?;
    let mut lib = Library::new(corpus, llm).with_budget(config.budget().map_err(|e| LibraryError::bad_request(e.to_string()))?)?;
    if !opts.ephemeral {
        lib = lib
            .with_templates(TemplateStore::open(layout.templates())?)
            .with_saved(SavedSetStore::open(layout.saved())?)
            .with_sessions(SessionStore::open(layout.sessions())?);
    }
    lib.add_space(Space::new(vectors, search, text_embedder, projection));
    Ok((lib, report))
}
