//! TOML configuration with environment overrides, and the on-disk data layout.
//!
//! ```toml
//! data_dir = "data"
//!
//! [embedding]
//! provider = "mock"        # mock | remote | precomputed
//! space = "mock"
//! dimension = 256
//!
//! [llm]
//! provider = "mock"        # mock | remote
//! base_url = "http://localhost:8000/v1"
//! model = "gpt-3.5-turbo"
//! token_limit = 16000
//! timeout_s = 60
//!
//! [server]
//! bind = "127.0.0.1"
//! port = 8080
//! ```
//!
//! Environment: `LLM_API_KEY` (used by both remote clients),
//! `PAPERSCOPE_DATA_DIR`, `PAPERSCOPE_LLM_BASE_URL`, `PAPERSCOPE_LLM_MODEL`,
//! `PAPERSCOPE_EMBEDDING_BASE_URL`, `PAPERSCOPE_EMBEDDING_MODEL`,
//! `PAPERSCOPE_PORT`.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::RemoteEmbeddingConfig;
use crate::index::AnnIndexConfig;
use crate::llm::RemoteLlmConfig;
use crate::rag::TokenBudget;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingProvider {
    #[default]
    Mock,
    Remote,
    Precomputed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LlmProvider {
    #[default]
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSection {
    pub provider: EmbeddingProvider,
    pub space: String,
    pub dimension: usize,
    pub base_url: String,
    pub model: String,
    pub batch_size: usize,
    pub timeout_s: u64,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        Self {
            provider: EmbeddingProvider::Mock,
            space: "mock".into(),
            dimension: 256,
            base_url: "http://localhost:8000/v1".into(),
            model: "text-embedding-ada-002".into(),
            batch_size: 64,
            timeout_s: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSection {
    pub provider: LlmProvider,
    pub base_url: String,
    pub model: String,
    pub token_limit: usize,
    pub reserve_for_answer: usize,
    pub history_budget: usize,
    pub timeout_s: u64,
}

impl Default for LlmSection {
    fn default() -> Self {
        let b = TokenBudget::default();
        Self {
            provider: LlmProvider::Mock,
            base_url: "http://localhost:8000/v1".into(),
            model: "gpt-3.5-turbo".into(),
            token_limit: b.model_limit,
            reserve_for_answer: b.reserve_for_answer,
            history_budget: b.history_budget,
            timeout_s: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerSection {
    pub bind: String,
    pub port: u16,
    /// Allowed CORS origin; any origin when unset.
    pub cors_origin: Option<String>,
}

impl Default for ServerSection {
    fn default() -> Self {
        Self { bind: "127.0.0.1".into(), port: 8080, cors_origin: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndexSection {
    pub neighbors_per_node: usize,
    pub build_beam: usize,
    pub query_beam: usize,
    pub seed: u64,
}

impl Default for IndexSection {
    fn default() -> Self {
        let c = AnnIndexConfig::default();
        Self { neighbors_per_node: c.neighbors_per_node, build_beam: c.build_beam, query_beam: c.query_beam, seed: c.seed }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub data_dir: Option<PathBuf>,
    pub embedding: EmbeddingSection,
    pub llm: LlmSection,
    pub server: ServerSection,
    pub index: IndexSection,
}

impl Config {
    pub fn from_toml(src: &str) -> Result<Self, ConfigError> {
        toml::from_str(src).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let src = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.to_path_buf(), e))?;
        Self::from_toml(&src)
    }

    /// Applies `PAPERSCOPE_*` overrides from the given variables.
    pub fn apply_env<I, K, V>(&mut self, vars: I) -> Result<(), ConfigError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: Into<String>,
    {
        for (k, v) in vars {
            let v: String = v.into();
            match k.as_ref() {
                "PAPERSCOPE_DATA_DIR" => self.data_dir = Some(PathBuf::from(v)),
                "PAPERSCOPE_LLM_BASE_URL" => self.llm.base_url = v,
                "PAPERSCOPE_LLM_MODEL" => self.llm.model = v,
                "PAPERSCOPE_EMBEDDING_BASE_URL" => self.embedding.base_url = v,
                "PAPERSCOPE_EMBEDDING_MODEL" => self.embedding.model = v,
                "PAPERSCOPE_PORT" => {
                    self.server.port = v.parse().map_err(|_| ConfigError::Invalid(format!("PAPERSCOPE_PORT={v}")))?
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn budget(&self) -> Result<TokenBudget, ConfigError> {
        let b = TokenBudget {
            model_limit: self.llm.token_limit,
            reserve_for_answer: self.llm.reserve_for_answer,
            history_budget: self.llm.history_budget,
        };
        b.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(b)
    }

    pub fn ann(&self) -> AnnIndexConfig {
        AnnIndexConfig {
            neighbors_per_node: self.index.neighbors_per_node,
            build_beam: self.index.build_beam,
            query_beam: self.index.query_beam,
            seed: self.index.seed,
        }
    }

    pub fn remote_embedding(&self) -> RemoteEmbeddingConfig {
        let mut c = RemoteEmbeddingConfig::new(&self.embedding.base_url, &self.embedding.model, self.embedding.dimension);
        c.batch_size = self.embedding.batch_size.max(1);
        c.timeout = Duration::from_secs(self.embedding.timeout_s);
        c
    }

    pub fn remote_llm(&self) -> RemoteLlmConfig {
        let mut c = RemoteLlmConfig::new(&self.llm.base_url, &self.llm.model);
        c.timeout = Duration::from_secs(self.llm.timeout_s);
        c
    }

    pub fn layout(&self) -> DataLayout {
        DataLayout::new(self.data_dir.clone().unwrap_or_else(|| PathBuf::from("data")))
    }
}

/// Where each artifact lives under a data directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataLayout {
    pub root: PathBuf,
}

impl DataLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn corpus(&self) -> PathBuf {
        self.root.join("corpus.jsonl")
    }

    pub fn embeddings(&self, space: &str) -> PathBuf {
        self.root.join("embeddings").join(format!("{space}.jsonl"))
    }

    pub fn index(&self, space: &str) -> PathBuf {
        self.root.join("index").join(format!("{space}.ann.json"))
    }

    pub fn projection(&self, space: &str) -> PathBuf {
        self.root.join("projection").join(format!("{space}.jsonl"))
    }

    pub fn saved(&self) -> PathBuf {
        self.root.join("saved.json")
    }

    pub fn templates(&self) -> PathBuf {
        self.root.join("templates.toml")
    }

    pub fn sessions(&self) -> PathBuf {
        self.root.join("sessions.jsonl")
    }
}
