//! The user's working sets of papers, persisted across restarts, with JSON
//! and BibTeX export.

pub mod bibtex;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, PaperRecord};

pub use bibtex::{assign_keys, bib_entries, export_bibtex, BibEntry};

#[derive(Debug, Error)]
pub enum SavedError {
    #[error("saved set {0} not found")]
    SetNotFound(String),
    #[error("paper {0} not found")]
    PaperNotFound(String),
    #[error("saved set {0} already exists")]
    AlreadyExists(String),
    #[error("invalid set id {0:?}")]
    InvalidId(String),
    #[error("saved-set store io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("saved-set store is malformed: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SavedPaperSet {
    pub set_id: String,
    pub paper_ids: Vec<String>,
    pub created: DateTime<Utc>,
    pub modified: DateTime<Utc>,
}

impl SavedPaperSet {
    pub fn new(set_id: impl Into<String>, now: DateTime<Utc>) -> Self {
        Self { set_id: set_id.into(), paper_ids: Vec::new(), created: now, modified: now }
    }

    /// Full records in set order. Ids no longer in the corpus are skipped.
    pub fn records<'c>(&self, corpus: &'c Corpus) -> Vec<&'c PaperRecord> {
        self.paper_ids.iter().filter_map(|id| corpus.get(id).ok()).collect()
    }
}

/// Records as a JSON array in the corpus record format.
pub fn export_json(records: &[&PaperRecord]) -> String {
    serde_json::to_string_pretty(records).expect("records serialize")
}

fn valid_set_id(id: &str) -> bool {
    crate::rag::is_valid_session_id(id)
}

#[derive(Debug, Serialize, Deserialize, Default)]
struct StoreFile {
    next_id: u64,
    sets: BTreeMap<String, SavedPaperSet>,
}

/// All saved sets. Mutations are serialized; with a path, each one rewrites
/// the store file atomically before it becomes visible.
#[derive(Debug, Default)]
pub struct SavedSetStore {
    state: Mutex<StoreFile>,
    path: Option<PathBuf>,
}

impl SavedSetStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self, SavedError> {
        let path = path.as_ref().to_path_buf();
        let state = if path.exists() {
            serde_json::from_str(&std::fs::read_to_string(&path)?).map_err(|e| SavedError::Format(e.to_string()))?
        } else {
            StoreFile::default()
        };
        Ok(Self { state: Mutex::new(state), path: Some(path) })
    }

    fn mutate<R>(&self, f: impl FnOnce(&mut StoreFile) -> Result<R, SavedError>) -> Result<R, SavedError> {
        let mut guard = self.state.lock().unwrap_or_else(|e| e.into_inner());
        let mut next = StoreFile { next_id: guard.next_id, sets: guard.sets.clone() };
        let out = f(&mut next)?;
        if let Some(path) = &self.path {
            let body = serde_json::to_vec_pretty(&next).map_err(|e| SavedError::Format(e.to_string()))?;
            crate::fsutil::write_atomic(path, &body)?;
        }
        *guard = next;
        Ok(out)
    }

    /// Creates a set; without an id, one of the form `set-N` is generated.
    pub fn create(&self, set_id: Option<&str>, now: DateTime<Utc>) -> Result<SavedPaperSet, SavedError> {
        self.mutate(|st| {
            let id = match set_id {
                Some(id) if !valid_set_id(id) => return Err(SavedError::InvalidId(id.into())),
                Some(id) if st.sets.contains_key(id) => return Err(SavedError::AlreadyExists(id.into())),
                Some(id) => id.to_string(),
                None => loop {
                    st.next_id += 1;
                    let id = format!("set-{}", st.next_id);
                    if !st.sets.contains_key(&id) {
                        break id;
                    }
                },
            };
            let set = SavedPaperSet::new(id.clone(), now);
            st.sets.insert(id, set.clone());
            Ok(set)
        })
    }

    pub fn get(&self, set_id: &str) -> Result<SavedPaperSet, SavedError> {
        let st = self.state.lock().unwrap_or_else(|e| e.into_inner());
        st.sets.get(set_id).cloned().ok_or_else(|| SavedError::SetNotFound(set_id.into()))
    }

    pub fn list(&self) -> Vec<SavedPaperSet> {
        self.state.lock().unwrap_or_else(|e| e.into_inner()).sets.values().cloned().collect()
    }

    pub fn delete(&self, set_id: &str) -> Result<(), SavedError> {
        self.mutate(|st| st.sets.remove(set_id).map(|_| ()).ok_or_else(|| SavedError::SetNotFound(set_id.into())))
    }

    /// Appends a paper if absent; saving twice is a no-op.
    pub fn save_paper(
        &self,
        set_id: &str,
        paper_id: &str,
        corpus: &Corpus,
        now: DateTime<Utc>,
    ) -> Result<SavedPaperSet, SavedError> {
        if !corpus.contains(paper_id) {
            return Err(SavedError::PaperNotFound(paper_id.into()));
        }
        self.mutate(|st| {
            let set = st.sets.get_mut(set_id).ok_or_else(|| SavedError::SetNotFound(set_id.into()))?;
            if !set.paper_ids.iter().any(|p| p == paper_id) {
                set.paper_ids.push(paper_id.to_string());
                set.modified = now;
            }
            Ok(set.clone())
        })
    }

    pub fn remove_paper(&self, set_id: &str, paper_id: &str, now: DateTime<Utc>) -> Result<SavedPaperSet, SavedError> {
        self.mutate(|st| {
            let set = st.sets.get_mut(set_id).ok_or_else(|| SavedError::SetNotFound(set_id.into()))?;
            let before = set.paper_ids.len();
            set.paper_ids.retain(|p| p != paper_id);
            if set.paper_ids.len() == before {
                return Err(SavedError::PaperNotFound(paper_id.into()));
            }
            set.modified = now;
            Ok(set.clone())
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn corpus() -> Corpus {
        let src = [
            r#"{"id":"p1","title":"One","authors":["Ada Lovelace"],"year":1943,"keywords":["k"],"venue":"V","citation_count":3,"source_url":"https://x"}"#,
            r#"{"id":"p2","title":"Two"}"#,
            r#"{"id":"p3","title":"Three"}"#,
        ];
        Corpus::new().ingested(Cursor::new(src.join("\n"))).unwrap().0
    }

    fn t0() -> DateTime<Utc> {
        DateTime::<Utc>::UNIX_EPOCH
    }

    #[test]
    fn save_is_idempotent_and_ordered() {
        let c = corpus();
        let store = SavedSetStore::in_memory();
        let s = store.create(None, t0()).unwrap();
        store.save_paper(&s.set_id, "p2", &c, t0()).unwrap();
        store.save_paper(&s.set_id, "p2", &c, t0()).unwrap();
        let s2 = store.save_paper(&s.set_id, "p1", &c, t0()).unwrap();
        assert_eq!(s2.paper_ids, vec!["p2", "p1"]);
        assert!(matches!(store.save_paper(&s.set_id, "zz", &c, t0()), Err(SavedError::PaperNotFound(_))));
        assert!(matches!(store.save_paper("nope", "p1", &c, t0()), Err(SavedError::SetNotFound(_))));
        assert!(matches!(store.create(Some(&s.set_id), t0()), Err(SavedError::AlreadyExists(_))));
        store.remove_paper(&s.set_id, "p2", t0()).unwrap();
        assert_eq!(store.get(&s.set_id).unwrap().paper_ids, vec!["p1"]);
    }

    #[test]
    fn json_export_round_trips() {
        let c = corpus();
        assert_eq!(export_json(&[]), "[]");
        let recs = vec![c.get("p2").unwrap(), c.get("p1").unwrap()];
        let doc = export_json(&recs);
        let (back, report) = Corpus::new().ingested(Cursor::new(doc)).unwrap();
        assert_eq!(report.accepted, 2);
        assert_eq!(back.records().iter().collect::<Vec<_>>(), recs);
    }

    #[test]
    fn persists_across_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("saved.json");
        let c = corpus();
        {
            let store = SavedSetStore::open(&path).unwrap();
            store.create(Some("mine"), t0()).unwrap();
            store.save_paper("mine", "p3", &c, t0()).unwrap();
        }
        let store = SavedSetStore::open(&path).unwrap();
        assert_eq!(store.get("mine").unwrap().paper_ids, vec!["p3"]);
        assert_eq!(store.create(None, t0()).unwrap().set_id, "set-1");
        store.delete("mine").unwrap();
        assert!(store.get("mine").is_err());
    }
}
