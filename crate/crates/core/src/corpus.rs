//! Paper-metadata corpus: ingestion, validation, deduplication, keyword
//! search, and Meta View aggregations.
//!
//! The corpus file format is one JSON object per line with the field names
//! `id, title, abstract, authors, keywords, venue, year, citation_count,
//! source_url`. Optional fields that are unknown are omitted rather than
//! written as `null`. A JSON array of the same objects (the saved-set export
//! document) is accepted as well.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::BufRead;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::text;

pub const MIN_YEAR: i64 = 1900;
pub const MAX_YEAR: i64 = 2100;
const TOP_KEYWORDS: usize = 20;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("paper not found: {0}")]
    NotFound(String),
    #[error("unreadable corpus source: {0}")]
    Io(#[from] std::io::Error),
    #[error("limit must be at least 1")]
    InvalidLimit,
}

/// One paper's metadata row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaperRecord {
    pub id: String,
    pub title: String,
    #[serde(rename = "abstract", default)]
    pub abstract_text: String,
    #[serde(default)]
    pub authors: Vec<String>,
    #[serde(default)]
    pub keywords: Vec<String>,
    #[serde(default)]
    pub venue: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub citation_count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_url: Option<String>,
}

impl PaperRecord {
    /// Key used to collapse preprint/venue duplicates: normalized title + year.
    pub fn dedup_key(&self) -> String {
        dedup_key(&self.title, self.year)
    }
}

fn dedup_key(title: &str, year: Option<i32>) -> String {
    match year {
        Some(y) => format!("{}|{y}", text::normalize(title)),
        None => format!("{}|", text::normalize(title)),
    }
}

/// Content-hash id for records that arrive without one.
pub fn derived_id(title: &str, year: Option<i32>) -> String {
    let digest = Sha256::digest(dedup_key(title, year).as_bytes());
    hex::encode(&digest[..8])
}

/// Ids are embedded verbatim in citation markup, so they cannot contain the
/// markup's structural characters.
pub fn is_valid_id(id: &str) -> bool {
    !id.is_empty() && !id.chars().any(|c| c.is_whitespace() || matches!(c, '|' | '[' | ']' | '*'))
}

/// Wire shape with every field optional so validation can name what is wrong.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    id: Option<String>,
    title: Option<String>,
    #[serde(rename = "abstract")]
    abstract_text: Option<String>,
    authors: Option<Vec<String>>,
    keywords: Option<Vec<String>>,
    venue: Option<String>,
    year: Option<i64>,
    citation_count: Option<i64>,
    source_url: Option<String>,
}

impl RawRecord {
    fn validate(self) -> Result<PaperRecord, String> {
        let title = text::collapse_whitespace(self.title.as_deref().unwrap_or(""));
        if title.is_empty() {
            return Err("invalid: empty title".into());
        }
        let year = match self.year {
            Some(y) if !(MIN_YEAR..=MAX_YEAR).contains(&y) => {
                return Err(format!("invalid: year {y} outside [{MIN_YEAR}, {MAX_YEAR}]"))
            }
            Some(y) => Some(y as i32),
            None => None,
        };
        let citation_count = match self.citation_count {
            Some(c) if c < 0 => return Err(format!("invalid: negative citation_count {c}")),
            Some(c) => Some(c as u64),
            None => None,
        };
        let id = match self.id {
            Some(id) if !is_valid_id(&id) => return Err(format!("invalid: malformed id {id:?}")),
            Some(id) => id,
            None => derived_id(&title, year),
        };
        Ok(PaperRecord {
            id,
            title,
            abstract_text: self.abstract_text.unwrap_or_default(),
            authors: self.authors.unwrap_or_default(),
            keywords: self.keywords.unwrap_or_default(),
            venue: self.venue.unwrap_or_default(),
            year,
            citation_count,
            source_url: self.source_url,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rejection {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub accepted: usize,
    pub rejected: Vec<Rejection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchField {
    Title,
    Abstract,
    Keywords,
    Authors,
}

impl SearchField {
    pub const ALL: [SearchField; 4] = [
        SearchField::Title,
        SearchField::Abstract,
        SearchField::Keywords,
        SearchField::Authors,
    ];

    pub fn parse(name: &str) -> Option<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "title" => Some(Self::Title),
            "abstract" => Some(Self::Abstract),
            "keywords" => Some(Self::Keywords),
            "authors" => Some(Self::Authors),
            _ => None,
        }
    }
}

/// Query plus the fields it is matched against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordQuery {
    pub query: String,
    pub fields: Vec<SearchField>,
}

impl KeywordQuery {
    pub fn new(query: impl Into<String>) -> Self {
        Self { query: query.into(), fields: SearchField::ALL.to_vec() }
    }

    pub fn with_fields(mut self, fields: &[SearchField]) -> Self {
        self.fields = fields.to_vec();
        self
    }
}

/// Meta View summaries.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    pub paper_count: usize,
    pub by_year: BTreeMap<i32, usize>,
    pub by_venue: BTreeMap<String, usize>,
    pub top_keywords: Vec<(String, usize)>,
}

#[derive(Debug, Clone, Default)]
struct FieldTokens {
    title: Vec<String>,
    abstract_text: Vec<String>,
    keywords: Vec<String>,
    authors: Vec<String>,
}

impl FieldTokens {
    fn of(record: &PaperRecord) -> Self {
        Self {
            title: text::tokenize(&record.title),
            abstract_text: text::tokenize(&record.abstract_text),
            keywords: text::tokenize(&record.keywords.join(" ")),
            authors: text::tokenize(&record.authors.join(" ")),
        }
    }

    fn field(&self, f: SearchField) -> &[String] {
        match f {
            SearchField::Title => &self.title,
            SearchField::Abstract => &self.abstract_text,
            SearchField::Keywords => &self.keywords,
            SearchField::Authors => &self.authors,
        }
    }
}

/// Normalized titles, kept alongside the records for citation matching.
#[derive(Debug, Clone, Default)]
pub struct TitleEntry {
    pub normalized: String,
    pub tokens: HashSet<String>,
}

/// An immutable-once-built set of papers.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    records: Vec<PaperRecord>,
    tokens: Vec<FieldTokens>,
    titles: Vec<TitleEntry>,
    by_id: HashMap<String, usize>,
    by_key: HashMap<String, usize>,
    by_normalized_title: HashMap<String, usize>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a corpus from records, applying the same validation and
    /// deduplication as file ingestion.
    pub fn from_records(records: impl IntoIterator<Item = PaperRecord>) -> (Self, IngestReport) {
        let mut corpus = Self::new();
        let mut report = IngestReport::default();
        for (i, rec) in records.into_iter().enumerate() {
            let raw = RawRecord {
                id: Some(rec.id),
                title: Some(rec.title),
                abstract_text: Some(rec.abstract_text),
                authors: Some(rec.authors),
                keywords: Some(rec.keywords),
                venue: Some(rec.venue),
                year: rec.year.map(i64::from),
                citation_count: rec.citation_count.map(|c| c as i64),
                source_url: rec.source_url,
            };
            corpus.offer(i + 1, raw.validate(), &mut report);
        }
        (corpus, report)
    }

    /// Reads a corpus source into a copy of this corpus. On an I/O error the
    /// receiver is left untouched.
    pub fn ingested(&self, mut source: impl BufRead) -> Result<(Corpus, IngestReport), CorpusError> {
        let mut contents = String::new();
        source.read_to_string(&mut contents)?;
        let mut next = self.clone();
        let mut report = IngestReport::default();
        if contents.trim_start().starts_with('[') {
            match serde_json::from_str::<Vec<serde_json::Value>>(&contents) {
                Ok(items) => {
                    for (i, item) in items.into_iter().enumerate() {
                        let parsed = serde_json::from_value::<RawRecord>(item)
                            .map_err(|e| format!("parse error: {e}"))
                            .and_then(RawRecord::validate);
                        next.offer(i + 1, parsed, &mut report);
                    }
                }
                Err(e) => report.rejected.push(Rejection { line: 1, reason: format!("parse error: {e}") }),
            }
        } else {
            for (i, line) in contents.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let parsed = serde_json::from_str::<RawRecord>(line)
                    .map_err(|e| format!("parse error: {e}"))
                    .and_then(RawRecord::validate);
                next.offer(i + 1, parsed, &mut report);
            }
        }
        Ok((next, report))
    }

    fn offer(&mut self, line: usize, parsed: Result<PaperRecord, String>, report: &mut IngestReport) {
        let rec = match parsed {
            Ok(rec) => rec,
            Err(reason) => {
                report.rejected.push(Rejection { line, reason });
                return;
            }
        };
        let key = rec.dedup_key();
        if self.by_key.contains_key(&key) {
            report.rejected.push(Rejection { line, reason: "duplicate".into() });
            return;
        }
        if self.by_id.contains_key(&rec.id) {
            report.rejected.push(Rejection { line, reason: format!("duplicate id {}", rec.id) });
            return;
        }
        let idx = self.records.len();
        let normalized = text::normalize(&rec.title);
        self.by_key.insert(key, idx);
        self.by_id.insert(rec.id.clone(), idx);
        self.by_normalized_title.entry(normalized.clone()).or_insert(idx);
        self.tokens.push(FieldTokens::of(&rec));
        self.titles.push(TitleEntry { tokens: text::tokenize(&normalized).into_iter().collect(), normalized });
        self.records.push(rec);
        report.accepted += 1;
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[PaperRecord] {
        &self.records
    }

    pub fn contains(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }

    /// Case-sensitive lookup.
    pub fn get(&self, id: &str) -> Result<&PaperRecord, CorpusError> {
        self.by_id
            .get(id)
            .map(|&i| &self.records[i])
            .ok_or_else(|| CorpusError::NotFound(id.to_string()))
    }

    pub fn title_entries(&self) -> &[TitleEntry] {
        &self.titles
    }

    /// Index of the first record whose normalized title equals `normalized`.
    pub fn find_normalized_title(&self, normalized: &str) -> Option<&PaperRecord> {
        self.by_normalized_title.get(normalized).map(|&i| &self.records[i])
    }

    /// Case-insensitive conjunctive token match over the selected fields,
    /// ordered by (match count desc, year desc, id asc). `limit = None` means
    /// unbounded.
    pub fn keyword_search(&self, query: &KeywordQuery, limit: Option<usize>) -> Result<Vec<&PaperRecord>, CorpusError> {
        if limit == Some(0) {
            return Err(CorpusError::InvalidLimit);
        }
        let mut wanted = text::tokenize(&query.query);
        wanted.sort();
        wanted.dedup();
        if wanted.is_empty() || query.fields.is_empty() {
            return Ok(Vec::new());
        }
        let fields: Vec<SearchField> = {
            let mut f = query.fields.clone();
            f.sort_by_key(|f| *f as u8);
            f.dedup();
            f
        };
        let scored = crate::parallel::map_slice(&self.tokens, |toks| {
            let mut total = 0usize;
            for w in &wanted {
                let hits: usize = fields
                    .iter()
                    .map(|&f| toks.field(f).iter().filter(|t| *t == w).count())
                    .sum();
                if hits == 0 {
                    return None;
                }
                total += hits;
            }
            Some(total)
        });
        let mut hits: Vec<(usize, usize)> = scored
            .into_iter()
            .enumerate()
            .filter_map(|(i, s)| s.map(|s| (i, s)))
            .collect();
        hits.sort_by(|&(ia, sa), &(ib, sb)| {
            let (ra, rb) = (&self.records[ia], &self.records[ib]);
            sb.cmp(&sa)
                .then_with(|| rb.year.cmp(&ra.year))
                .then_with(|| ra.id.cmp(&rb.id))
        });
        if let Some(limit) = limit {
            hits.truncate(limit);
        }
        Ok(hits.into_iter().map(|(i, _)| &self.records[i]).collect())
    }

    /// Counts over the whole corpus, or over the unbounded keyword-search
    /// result set when a filter is given.
    pub fn aggregate_meta(&self, filter: Option<&KeywordQuery>) -> CorpusStats {
        let subset: Vec<&PaperRecord> = match filter {
            Some(q) => self.keyword_search(q, None).unwrap_or_default(),
            None => self.records.iter().collect(),
        };
        stats_of(&subset)
    }
}

pub fn stats_of(records: &[&PaperRecord]) -> CorpusStats {
    let mut stats = CorpusStats { paper_count: records.len(), ..Default::default() };
    let mut keywords: HashMap<String, usize> = HashMap::new();
    for rec in records {
        if let Some(y) = rec.year {
            *stats.by_year.entry(y).or_default() += 1;
        }
        let venue = rec.venue.trim();
        if !venue.is_empty() {
            *stats.by_venue.entry(venue.to_string()).or_default() += 1;
        }
        let mut seen = HashSet::new();
        for kw in &rec.keywords {
            let kw = text::collapse_whitespace(kw).to_lowercase();
            if !kw.is_empty() && seen.insert(kw.clone()) {
                *keywords.entry(kw).or_default() += 1;
            }
        }
    }
    let mut top: Vec<(String, usize)> = keywords.into_iter().collect();
    top.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    top.truncate(TOP_KEYWORDS);
    stats.top_keywords = top;
    stats
}

/// Shared handle whose corpus is replaced atomically on ingest.
#[derive(Debug, Default)]
pub struct CorpusStore {
    current: RwLock<Arc<Corpus>>,
}

impl CorpusStore {
    pub fn new(corpus: Corpus) -> Self {
        Self { current: RwLock::new(Arc::new(corpus)) }
    }

    pub fn snapshot(&self) -> Arc<Corpus> {
        self.current.read().expect("corpus lock poisoned").clone()
    }

    /// Ingests into a fresh copy and swaps it in only if the source was
    /// readable in full.
    pub fn ingest(&self, source: impl BufRead) -> Result<IngestReport, CorpusError> {
        let mut guard = self.current.write().expect("corpus lock poisoned");
        let (next, report) = guard.ingested(source)?;
        *guard = Arc::new(next);
        Ok(report)
    }
}
