//! Named prompt templates with shipped defaults and persisted overrides.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const DEFAULTS_TOML: &str = include_str!("../templates/default_templates.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateName {
    Summarize,
    LiteratureReview,
    Condense,
    ChatSystem,
}

impl TemplateName {
    pub const ALL: [TemplateName; 4] =
        [TemplateName::Summarize, TemplateName::LiteratureReview, TemplateName::Condense, TemplateName::ChatSystem];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateName::Summarize => "summarize",
            TemplateName::LiteratureReview => "literature_review",
            TemplateName::Condense => "condense",
            TemplateName::ChatSystem => "chat_system",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == name)
    }

    pub fn required_placeholders(self) -> &'static [&'static str] {
        match self {
            TemplateName::Summarize | TemplateName::LiteratureReview => &["{papers}"],
            TemplateName::Condense => &["{history}"],
            TemplateName::ChatSystem => &[],
        }
    }
}

impl fmt::Display for TemplateName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("unknown template {0}")]
    UnknownName(String),
    #[error("template {name} is missing required placeholder {placeholder}")]
    MissingPlaceholder { name: TemplateName, placeholder: &'static str },
    #[error("template store io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("template file is malformed: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub name: TemplateName,
    pub text: String,
    pub is_default: bool,
}

impl PromptTemplate {
    /// Substitutes `{key}` placeholders; unknown braces stay as written.
    pub fn render(&self, values: &[(&str, &str)]) -> String {
        render(&self.text, values)
    }
}

pub fn render(text: &str, values: &[(&str, &str)]) -> String {
    let mut out = text.to_string();
    for (key, value) in values {
        out = out.replace(&format!("{{{key}}}"), value);
    }
    out
}

pub fn validate(name: TemplateName, text: &str) -> Result<(), TemplateError> {
    for &placeholder in name.required_placeholders() {
        if !text.contains(placeholder) {
            return Err(TemplateError::MissingPlaceholder { name, placeholder });
        }
    }
    Ok(())
}

fn parse_table(src: &str) -> Result<BTreeMap<TemplateName, String>, TemplateError> {
    let raw: BTreeMap<String, String> = toml::from_str(src).map_err(|e| TemplateError::Format(e.to_string()))?;
    raw.into_iter()
        .map(|(k, v)| TemplateName::parse(&k).map(|n| (n, v)).ok_or(TemplateError::UnknownName(k)))
        .collect()
}

/// The shipped text of a template.
pub fn default_text(name: TemplateName) -> String {
    // The bundled file is checked by a unit test, so a panic here means a broken build.
    parse_table(DEFAULTS_TOML).expect("bundled templates parse")[&name].clone()
}

/// Defaults plus overrides; overrides persist to a TOML file when a path is set.
#[derive(Debug)]
pub struct TemplateStore {
    defaults: BTreeMap<TemplateName, String>,
    overrides: RwLock<BTreeMap<TemplateName, String>>,
    path: Option<PathBuf>,
}

impl Default for TemplateStore {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl TemplateStore {
    pub fn in_memory() -> Self {
        let defaults = parse_table(DEFAULTS_TOML).expect("bundled templates parse");
        Self { defaults, overrides: RwLock::new(BTreeMap::new()), path: None }
    }

    /// Opens an override file; a missing file means no overrides yet.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, TemplateError> {
        let path = path.as_ref().to_path_buf();
        let mut store = Self::in_memory();
        if path.exists() {
            let table = parse_table(&std::fs::read_to_string(&path)?)?;
            for (name, text) in &table {
                validate(*name, text)?;
            }
            store.overrides = RwLock::new(table);
        }
        store.path = Some(path);
        Ok(store)
    }

    pub fn get(&self, name: TemplateName) -> PromptTemplate {
        let overrides = self.overrides.read().unwrap_or_else(|e| e.into_inner());
        match overrides.get(&name) {
            Some(text) => PromptTemplate { name, text: text.clone(), is_default: false },
            None => PromptTemplate { name, text: self.defaults[&name].clone(), is_default: true },
        }
    }

    pub fn all(&self) -> Vec<PromptTemplate> {
        TemplateName::ALL.iter().map(|&n| self.get(n)).collect()
    }

    pub fn set(&self, name: TemplateName, text: impl Into<String>) -> Result<PromptTemplate, TemplateError> {
        let text = text.into();
        validate(name, &text)?;
        let mut overrides = self.overrides.write().unwrap_or_else(|e| e.into_inner());
        let mut next = overrides.clone();
        next.insert(name, text.clone());
        self.persist(&next)?;
        *overrides = next;
        Ok(PromptTemplate { name, text, is_default: false })
    }

    pub fn reset(&self, name: TemplateName) -> Result<PromptTemplate, TemplateError> {
        let mut overrides = self.overrides.write().unwrap_or_else(|e| e.into_inner());
        let mut next = overrides.clone();
        next.remove(&name);
        self.persist(&next)?;
        *overrides = next;
        Ok(PromptTemplate { name, text: self.defaults[&name].clone(), is_default: true })
    }

    fn persist(&self, table: &BTreeMap<TemplateName, String>) -> Result<(), TemplateError> {
        let Some(path) = &self.path else { return Ok(()) };
        let raw: BTreeMap<&str, &str> = table.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
        let body = toml::to_string(&raw).map_err(|e| TemplateError::Format(e.to_string()))?;
        crate::fsutil::write_atomic(path, body.as_bytes())?;
        Ok(())
    }
}
