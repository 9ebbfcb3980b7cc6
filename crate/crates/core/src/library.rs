//! The assembled application: one corpus, its embedding spaces with search
//! indexes, the chat model, templates, saved sets and chat sessions.
//!
//! Every HTTP route and CLI verb is a call on [`Library`].

use std::collections::{BTreeMap, HashSet};
use std::sync::{Arc, OnceLock, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{self, AnalysisError, LiteratureReviewResult, PaperSummary};
use crate::corpus::{Corpus, CorpusError, CorpusStats, KeywordQuery, PaperRecord, SearchField};
use crate::embedding::{Embedder, EmbeddingError, SpaceVectors};
use crate::index::{
    self, similar_by_papers, similar_by_text, ExactIndex, IndexError, SearchHit, VectorSearch, DEFAULT_SIMILAR_K,
};
use crate::llm::{LanguageModel, LlmError};
use crate::projection::{project_pca, ProjectionError, ProjectionPoint, ProjectionTable};
use crate::rag::{self, ChatContext, ChatOutcome, ChatSession, Clock, RagError, SessionStore, SystemClock, TokenBudget};
use crate::saved::{self, SavedError, SavedPaperSet, SavedSetStore};
use crate::templates::{PromptTemplate, TemplateError, TemplateName, TemplateStore};

/// Version of the response shapes, reported under `/meta/schema`.
pub const SCHEMA_VERSION: u32 = 1;

/// Caller-facing error class; the server maps it to status codes, the CLI to
/// exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    NotFound,
    BadRequest,
    ProviderError,
    OversizeQuery,
    Internal,
}

#[derive(Debug, Error)]
#[error("{message}")]
pub struct LibraryError {
    pub kind: ErrorKind,
    pub message: String,
}

impl LibraryError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self { kind, message: message.into() }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::BadRequest, message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::NotFound, message)
    }
}

fn err(kind: ErrorKind, e: impl std::fmt::Display) -> LibraryError {
    LibraryError::new(kind, e.to_string())
}

impl From<CorpusError> for LibraryError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::NotFound(_) => err(ErrorKind::NotFound, e),
            CorpusError::InvalidLimit => err(ErrorKind::BadRequest, e),
            CorpusError::Io(_) => err(ErrorKind::Internal, e),
        }
    }
}

impl From<EmbeddingError> for LibraryError {
    fn from(e: EmbeddingError) -> Self {
        match e {
            EmbeddingError::Config(_) | EmbeddingError::Protocol(_) | EmbeddingError::Transient { .. } => {
                err(ErrorKind::ProviderError, e)
            }
            EmbeddingError::NoEmbedder { .. } | EmbeddingError::DimensionMismatch { .. } => err(ErrorKind::BadRequest, e),
            _ => err(ErrorKind::Internal, e),
        }
    }
}

impl From<LlmError> for LibraryError {
    fn from(e: LlmError) -> Self {
        err(ErrorKind::ProviderError, e)
    }
}

impl From<IndexError> for LibraryError {
    fn from(e: IndexError) -> Self {
        match e {
            IndexError::Embedding(inner) => inner.into(),
            IndexError::MissingEmbedding(..) => err(ErrorKind::NotFound, e),
            IndexError::SpaceMismatch(..)
            | IndexError::DimensionMismatch { .. }
            | IndexError::InvalidParameter(_)
            | IndexError::DegenerateSeed => err(ErrorKind::BadRequest, e),
            IndexError::Format(_) | IndexError::Io(_) => err(ErrorKind::Internal, e),
        }
    }
}

impl From<RagError> for LibraryError {
    fn from(e: RagError) -> Self {
        match e {
            RagError::Llm(inner) => inner.into(),
            RagError::Index(inner) => inner.into(),
            RagError::Embedding(inner) => inner.into(),
            RagError::OversizeQuery { .. } => err(ErrorKind::OversizeQuery, e),
            RagError::BadRequest(_) | RagError::Precondition(_) | RagError::InvalidBudget(_) => {
                err(ErrorKind::BadRequest, e)
            }
            RagError::UnknownPaper(_) | RagError::Io(_) => err(ErrorKind::Internal, e),
        }
    }
}

impl From<SavedError> for LibraryError {
    fn from(e: SavedError) -> Self {
        match e {
            SavedError::SetNotFound(_) | SavedError::PaperNotFound(_) => err(ErrorKind::NotFound, e),
            SavedError::AlreadyExists(_) | SavedError::InvalidId(_) => err(ErrorKind::BadRequest, e),
            SavedError::Io(_) | SavedError::Format(_) => err(ErrorKind::Internal, e),
        }
    }
}

impl From<TemplateError> for LibraryError {
    fn from(e: TemplateError) -> Self {
        match e {
            TemplateError::UnknownName(_) => err(ErrorKind::NotFound, e),
            TemplateError::MissingPlaceholder { .. } => err(ErrorKind::BadRequest, e),
            TemplateError::Io(_) | TemplateError::Format(_) => err(ErrorKind::Internal, e),
        }
    }
}

impl From<AnalysisError> for LibraryError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::InvalidParameter(_) => err(ErrorKind::BadRequest, e),
            AnalysisError::Prompt(inner) => inner.into(),
        }
    }
}

impl From<ProjectionError> for LibraryError {
    fn from(e: ProjectionError) -> Self {
        match e {
            ProjectionError::InsufficientData(_) | ProjectionError::InvalidParameter(_) => err(ErrorKind::BadRequest, e),
            ProjectionError::MissingVector(_) => err(ErrorKind::NotFound, e),
            ProjectionError::Io(_) => err(ErrorKind::Internal, e),
        }
    }
}

pub type LibraryResult<T> = Result<T, LibraryError>;

/// One embedding space as served.
pub struct Space {
    vectors: Arc<SpaceVectors>,
    exact: ExactIndex,
    search: Arc<dyn VectorSearch>,
    embedder: Option<Arc<dyn Embedder>>,
    projection: OnceLock<Arc<ProjectionTable>>,
}

impl Space {
    /// `search` defaults to the exact index when no approximate one is given.
    pub fn new(
        vectors: Arc<SpaceVectors>,
        search: Option<Arc<dyn VectorSearch>>,
        embedder: Option<Arc<dyn Embedder>>,
        projection: Option<ProjectionTable>,
    ) -> Self {
        let exact = ExactIndex::new(vectors.clone());
        let search = search.unwrap_or_else(|| Arc::new(exact.clone()));
        let cell = OnceLock::new();
        if let Some(p) = projection {
            let _ = cell.set(Arc::new(p));
        }
        Self { vectors, exact, search, embedder, projection: cell }
    }

    pub fn name(&self) -> &str {
        self.vectors.name()
    }

    pub fn vectors(&self) -> &Arc<SpaceVectors> {
        &self.vectors
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub papers: usize,
    pub spaces: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PaperQuery {
    pub query: Option<String>,
    pub fields: Option<Vec<String>>,
    pub limit: Option<usize>,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperPage {
    pub total: usize,
    pub offset: usize,
    pub papers: Vec<PaperRecord>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SimilarRequest {
    pub seeds: Vec<String>,
    pub title: Option<String>,
    #[serde(rename = "abstract")]
    pub abstract_text: Option<String>,
    pub space: Option<String>,
    pub k: Option<usize>,
    pub threshold: Option<f32>,
    /// Force the full scan even when an approximate index is loaded.
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarHit {
    pub paper_id: String,
    pub score: f32,
    pub title: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
    pub venue: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarResponse {
    pub space: String,
    pub hits: Vec<SimilarHit>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Json,
    Bibtex,
}

impl ExportFormat {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "json" => Some(ExportFormat::Json),
            "bibtex" | "bib" => Some(ExportFormat::Bibtex),
            _ => None,
        }
    }

    pub fn content_type(self) -> &'static str {
        match self {
            ExportFormat::Json => "application/json",
            ExportFormat::Bibtex => "application/x-bibtex",
        }
    }
}

pub struct Library {
    corpus: Arc<Corpus>,
    spaces: RwLock<BTreeMap<String, Arc<Space>>>,
    default_space: RwLock<Option<String>>,
    llm: Arc<dyn LanguageModel>,
    templates: TemplateStore,
    saved: SavedSetStore,
    sessions: SessionStore,
    budget: TokenBudget,
    clock: Arc<dyn Clock>,
}

impl Library {
    pub fn new(corpus: Corpus, llm: Arc<dyn LanguageModel>) -> Self {
        Self {
            corpus: Arc::new(corpus),
            spaces: RwLock::new(BTreeMap::new()),
            default_space: RwLock::new(None),
            llm,
            templates: TemplateStore::in_memory(),
            saved: SavedSetStore::in_memory(),
            sessions: SessionStore::in_memory(),
            budget: TokenBudget::default(),
            clock: Arc::new(SystemClock),
        }
    }

    pub fn with_templates(mut self, t: TemplateStore) -> Self {
        self.templates = t;
        self
    }

    pub fn with_saved(mut self, s: SavedSetStore) -> Self {
        self.saved = s;
        self
    }

    pub fn with_sessions(mut self, s: SessionStore) -> Self {
        self.sessions = s;
        self
    }

    pub fn with_budget(mut self, b: TokenBudget) -> LibraryResult<Self> {
        b.validate()?;
        self.budget = b;
        Ok(self)
    }

    pub fn with_clock(mut self, c: Arc<dyn Clock>) -> Self {
        self.clock = c;
        self
    }

    /// Registers a space. The first one added becomes the default.
    pub fn add_space(&self, space: Space) {
        let name = space.name().to_string();
        self.spaces.write().unwrap_or_else(|e| e.into_inner()).insert(name.clone(), Arc::new(space));
        let mut d = self.default_space.write().unwrap_or_else(|e| e.into_inner());
        if d.is_none() {
            *d = Some(name);
        }
    }

    pub fn set_default_space(&self, name: &str) -> LibraryResult<()> {
        self.space(Some(name))?;
        *self.default_space.write().unwrap_or_else(|e| e.into_inner()) = Some(name.to_string());
        Ok(())
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn space(&self, name: Option<&str>) -> LibraryResult<Arc<Space>> {
        let name = match name {
            Some(n) => n.to_string(),
            None => self
                .default_space
                .read()
                .unwrap_or_else(|e| e.into_inner())
                .clone()
                .ok_or_else(|| LibraryError::bad_request("no embedding space is loaded"))?,
        };
        self.spaces
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(&name)
            .cloned()
            .ok_or_else(|| LibraryError::not_found(format!("embedding space {name} is not loaded")))
    }

    pub fn space_names(&self) -> Vec<String> {
        self.spaces.read().unwrap_or_else(|e| e.into_inner()).keys().cloned().collect()
    }

    pub fn health(&self) -> Health {
        Health { status: "ok".into(), papers: self.corpus.len(), spaces: self.space_names() }
    }

    pub fn papers(&self, q: &PaperQuery) -> LibraryResult<PaperPage> {
        let matched: Vec<&PaperRecord> = match q.query.as_deref().map(str::trim).filter(|s| !s.is_empty()) {
            Some(text) => {
                let mut kq = KeywordQuery::new(text);
                if let Some(fields) = &q.fields {
                    let parsed: Vec<SearchField> = fields
                        .iter()
                        .map(|f| SearchField::parse(f).ok_or_else(|| LibraryError::bad_request(format!("unknown field {f}"))))
                        .collect::<Result<_, _>>()?;
                    kq = kq.with_fields(&parsed);
                }
                self.corpus.keyword_search(&kq, None)?
            }
            None => self.corpus.records().iter().collect(),
        };
        if q.limit == Some(0) {
            return Err(LibraryError::bad_request("limit must be at least 1"));
        }
        let total = matched.len();
        let papers =
            matched.into_iter().skip(q.offset).take(q.limit.unwrap_or(usize::MAX)).cloned().collect();
        Ok(PaperPage { total, offset: q.offset, papers })
    }

    pub fn paper(&self, id: &str) -> LibraryResult<PaperRecord> {
        Ok(self.corpus.get(id)?.clone())
    }

    pub fn similar(&self, req: &SimilarRequest) -> LibraryResult<SimilarResponse> {
        let space = self.space(req.space.as_deref())?;
        let k = req.k.unwrap_or(DEFAULT_SIMILAR_K);
        let search: &dyn VectorSearch = if req.exact { &space.exact } else { space.search.as_ref() };
        let title = req.title.as_deref().unwrap_or("");
        let abs = req.abstract_text.as_deref().unwrap_or("");
        let hits = if !req.seeds.is_empty() {
            let mut seen = HashSet::new();
            let seeds: Vec<String> = req.seeds.iter().filter(|s| seen.insert(s.as_str())).cloned().collect();
            for s in &seeds {
                self.corpus.get(s)?;
            }
            similar_by_papers(search, &seeds, k, req.threshold)?
        } else if !title.trim().is_empty() || !abs.trim().is_empty() {
            let embedder = space.embedder.as_ref().ok_or_else(|| {
                LibraryError::bad_request(format!("space {} has no embedder for text queries", space.name()))
            })?;
            let mut hits = similar_by_text(search, embedder.as_ref(), title, abs, k)?;
            if let Some(t) = req.threshold {
                hits.retain(|h| h.score > t);
            }
            hits
        } else {
            return Err(LibraryError::bad_request("give seed paper ids or a title/abstract"));
        };
        Ok(SimilarResponse { space: space.name().to_string(), hits: self.decorate(hits) })
    }

    fn decorate(&self, hits: Vec<SearchHit>) -> Vec<SimilarHit> {
        hits.into_iter()
            .filter_map(|h| {
                let r = self.corpus.get(&h.paper_id).ok()?;
                Some(SimilarHit {
                    paper_id: h.paper_id,
                    score: h.score,
                    title: r.title.clone(),
                    year: r.year,
                    venue: r.venue.clone(),
                })
            })
            .collect()
    }

    /// Precomputed coordinates when loaded, else PCA computed once.
    pub fn projection(&self, space: Option<&str>) -> LibraryResult<Arc<ProjectionTable>> {
        let space = self.space(space)?;
        if let Some(p) = space.projection.get() {
            return Ok(p.clone());
        }
        let points = project_pca(&space.vectors)?;
        Ok(space.projection.get_or_init(|| Arc::new(ProjectionTable::from_points(points))).clone())
    }

    pub fn meta(&self, query: Option<&str>) -> CorpusStats {
        match query.map(str::trim).filter(|q| !q.is_empty()) {
            Some(q) => self.corpus.aggregate_meta(Some(&KeywordQuery::new(q))),
            None => self.corpus.aggregate_meta(None),
        }
    }

    pub fn chat(&self, session_id: &str, message: &str, space: Option<&str>) -> LibraryResult<ChatOutcome> {
        let existing = self.sessions.get(session_id);
        let space_name = match (&existing, space) {
            (Some(s), _) => s.lock().unwrap_or_else(|e| e.into_inner()).space.clone(),
            (None, Some(n)) => n.to_string(),
            (None, None) => self.space(None)?.name().to_string(),
        };
        let space = self.space(Some(&space_name))?;
        let embedder = space
            .embedder
            .clone()
            .ok_or_else(|| LibraryError::bad_request(format!("space {space_name} has no embedder for chat queries")))?;
        let shared = match existing {
            Some(s) => s,
            None => self.sessions.get_or_create(session_id, &space_name, rag::DEFAULT_CHAT_K)?,
        };
        let mut session = shared.lock().unwrap_or_else(|e| e.into_inner());
        let before = session.clone();
        let ctx = ChatContext {
            corpus: &self.corpus,
            index: space.search.as_ref(),
            embedder: embedder.as_ref(),
            llm: self.llm.as_ref(),
            templates: &self.templates,
            budget: self.budget,
            clock: self.clock.as_ref(),
        };
        let mut work = before.clone();
        let outcome = rag::chat(&ctx, &mut work, message)?;
        self.sessions.record(&before, &work)?;
        *session = work;
        Ok(outcome)
    }

    pub fn session(&self, session_id: &str) -> LibraryResult<ChatSession> {
        let s = self.sessions.get(session_id).ok_or_else(|| LibraryError::not_found(format!("chat session {session_id} not found")))?;
        let s = s.lock().unwrap_or_else(|e| e.into_inner()).clone();
        Ok(s)
    }

    pub fn saved_create(&self, set_id: Option<&str>) -> LibraryResult<SavedPaperSet> {
        Ok(self.saved.create(set_id, self.clock.now())?)
    }

    pub fn saved_list(&self) -> Vec<SavedPaperSet> {
        self.saved.list()
    }

    pub fn saved_get(&self, set_id: &str) -> LibraryResult<SavedPaperSet> {
        Ok(self.saved.get(set_id)?)
    }

    pub fn saved_delete(&self, set_id: &str) -> LibraryResult<()> {
        Ok(self.saved.delete(set_id)?)
    }

    pub fn saved_add(&self, set_id: &str, paper_id: &str) -> LibraryResult<SavedPaperSet> {
        Ok(self.saved.save_paper(set_id, paper_id, &self.corpus, self.clock.now())?)
    }

    pub fn saved_remove(&self, set_id: &str, paper_id: &str) -> LibraryResult<SavedPaperSet> {
        Ok(self.saved.remove_paper(set_id, paper_id, self.clock.now())?)
    }

    fn saved_records(&self, set_id: &str) -> LibraryResult<Vec<&PaperRecord>> {
        let set = self.saved.get(set_id)?;
        Ok(set.records(&self.corpus))
    }

    pub fn summarize(&self, set_id: &str) -> LibraryResult<Vec<PaperSummary>> {
        let records = self.saved_records(set_id)?;
        let t = self.templates.get(TemplateName::Summarize);
        Ok(analysis::summarize(&records, &t, self.llm.as_ref(), &self.budget)?)
    }

    pub fn literature_review(&self, set_id: &str) -> LibraryResult<LiteratureReviewResult> {
        let records = self.saved_records(set_id)?;
        let s = self.templates.get(TemplateName::Summarize);
        let r = self.templates.get(TemplateName::LiteratureReview);
        Ok(analysis::literature_review(&records, &s, &r, self.llm.as_ref(), &self.budget)?)
    }

    pub fn export(&self, set_id: &str, format: ExportFormat) -> LibraryResult<String> {
        let records = self.saved_records(set_id)?;
        Ok(match format {
            ExportFormat::Json => saved::export_json(&records),
            ExportFormat::Bibtex => saved::export_bibtex(&records),
        })
    }

    fn template_name(name: &str) -> LibraryResult<TemplateName> {
        TemplateName::parse(name).ok_or_else(|| LibraryError::not_found(format!("unknown template {name}")))
    }

    pub fn templates(&self) -> Vec<PromptTemplate> {
        self.templates.all()
    }

    pub fn template(&self, name: &str) -> LibraryResult<PromptTemplate> {
        Ok(self.templates.get(Self::template_name(name)?))
    }

    pub fn set_template(&self, name: &str, text: &str) -> LibraryResult<PromptTemplate> {
        Ok(self.templates.set(Self::template_name(name)?, text)?)
    }

    pub fn reset_template(&self, name: &str) -> LibraryResult<PromptTemplate> {
        Ok(self.templates.reset(Self::template_name(name)?)?)
    }
}

/// Projection points of a table as a plain list.
pub fn projection_points(table: &ProjectionTable) -> Vec<ProjectionPoint> {
    table.points().to_vec()
}

/// Exact top-k for a seed paper; the reference the approximate path is
/// checked against.
pub fn exact_similar(vectors: &SpaceVectors, seed_id: &str, k: usize) -> Result<Vec<SearchHit>, IndexError> {
    let seed = vectors
        .get(seed_id)
        .ok_or_else(|| IndexError::MissingEmbedding(seed_id.to_string(), vectors.name().to_string()))?;
    let exclude: HashSet<String> = [seed_id.to_string()].into();
    index::search_exact(vectors, &seed, k, &exclude)
}
