//! Chat-completion clients.
//!
//! The remote client speaks `POST {base_url}/chat/completions` with
//! `{"model", "messages": [{"role", "content"}]}` and reads
//! `choices[0].message.content`. [`ScriptedLlm`] is the offline stand-in used
//! by tests, the sample workflow, and `--mock-llm`.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("llm configuration error: {0}")]
    Config(String),
    #[error("llm provider refused credentials: {0}")]
    Auth(String),
    #[error("llm provider unavailable: {0}")]
    Transient(String),
    #[error("llm protocol error: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }
}

/// What a request is for. Never sent on the wire; lets the scripted model
/// pick a canned behavior and lets logs tell calls apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LlmTask {
    Condense,
    Answer,
    Summarize,
    Synthesize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatRequest {
    pub task: LlmTask,
    pub messages: Vec<ChatMessage>,
}

/// Separator between message contents when a request is viewed as one text.
pub const MESSAGE_SEPARATOR: &str = "\n\n";

impl ChatRequest {
    pub fn new(task: LlmTask, messages: Vec<ChatMessage>) -> Self {
        Self { task, messages }
    }

    /// All message contents joined; this is the text the token budget covers.
    pub fn full_text(&self) -> String {
        self.messages.iter().map(|m| m.content.as_str()).collect::<Vec<_>>().join(MESSAGE_SEPARATOR)
    }
}

pub trait LanguageModel: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError>;
}

#[derive(Debug, Clone)]
pub struct RemoteLlmConfig {
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_attempts: usize,
    pub backoff: Duration,
}

impl RemoteLlmConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            api_key: std::env::var("LLM_API_KEY").ok(),
            timeout: Duration::from_secs(60),
            max_attempts: 3,
            backoff: Duration::from_millis(500),
        }
    }
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

pub struct RemoteLlm {
    client: reqwest::blocking::Client,
    url: String,
    config: RemoteLlmConfig,
}

impl RemoteLlm {
    pub fn new(config: RemoteLlmConfig) -> Result<Self, LlmError> {
        if config.model.trim().is_empty() {
            return Err(LlmError::Config("llm.model is empty".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        let url = format!("{}/chat/completions", config.base_url.trim_end_matches('/'));
        Ok(Self { client, url, config })
    }

    fn attempt(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let body = CompletionRequest { model: &self.config.model, messages: &request.messages };
        let mut req = self.client.post(&self.url).json(&body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| LlmError::Transient(e.to_string()))?;
        let status = resp.status();
        if status == reqwest::StatusCode::UNAUTHORIZED || status == reqwest::StatusCode::FORBIDDEN {
            return Err(LlmError::Auth(format!("provider returned {status}")));
        }
        if status.is_server_error() || status == reqwest::StatusCode::TOO_MANY_REQUESTS {
            return Err(LlmError::Transient(format!("provider returned {status}")));
        }
        if !status.is_success() {
            return Err(LlmError::Protocol(format!("provider returned {status}")));
        }
        let parsed: CompletionResponse = resp.json().map_err(|e| LlmError::Protocol(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| LlmError::Protocol("response has no choices[0].message.content".into()))
    }
}

impl LanguageModel for RemoteLlm {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let mut delay = self.config.backoff;
        let mut last = LlmError::Transient("no attempts made".into());
        for attempt in 0..self.config.max_attempts.max(1) {
            if attempt > 0 {
                std::thread::sleep(delay);
                delay *= 2;
            }
            match self.attempt(request) {
                Err(LlmError::Transient(m)) => {
                    tracing::warn!(attempt, error = %m, "llm call failed, retrying");
                    last = LlmError::Transient(m);
                }
                other => return other,
            }
        }
        Err(last)
    }
}

/// Text returned by the scripted model for every condense request unless a
/// rule overrides it.
pub const MOCK_CONDENSE_MARKER: &str = "[condensed history]";

#[derive(Debug, Clone)]
pub enum Matcher {
    Any,
    Task(LlmTask),
    /// Substring of the request's full text.
    Contains(String),
    /// xxh3 of the request's full text.
    PromptHash(u64),
}

impl Matcher {
    fn matches(&self, req: &ChatRequest, text: &str) -> bool {
        match self {
            Matcher::Any => true,
            Matcher::Task(t) => req.task == *t,
            Matcher::Contains(s) => text.contains(s.as_str()),
            Matcher::PromptHash(h) => prompt_hash(text) == *h,
        }
    }
}

pub fn prompt_hash(text: &str) -> u64 {
    xxhash_rust::xxh3::xxh3_64(text.as_bytes())
}

#[derive(Debug, Clone)]
pub enum Script {
    Reply(String),
    Fail(LlmError),
    /// Cites, in bold, every `Title: ...` line found in the prompt.
    EchoTitles,
}

/// Deterministic offline model. The first rule whose matcher accepts a
/// request decides the reply; otherwise condense requests get
/// [`MOCK_CONDENSE_MARKER`] and everything else echoes the prompt's titles.
#[derive(Debug, Default)]
pub struct ScriptedLlm {
    rules: Vec<(Matcher, Script)>,
    calls: AtomicUsize,
    log: Mutex<Vec<ChatRequest>>,
}

impl ScriptedLlm {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_rule(mut self, matcher: Matcher, script: Script) -> Self {
        self.rules.push((matcher, script));
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.log.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

fn echo_titles(task: LlmTask, text: &str) -> String {
    let titles: Vec<&str> = text
        .lines()
        .filter_map(|l| l.trim_start().strip_prefix("Title: "))
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .collect();
    let lead = match task {
        LlmTask::Summarize => "Summary of",
        LlmTask::Synthesize => "This review brings together",
        _ => "Relevant papers include",
    };
    if titles.is_empty() {
        return format!("{lead} no listed papers.");
    }
    let cited: Vec<String> = titles.iter().map(|t| format!("**{t}**")).collect();
    format!("{lead} {}.", cited.join("; "))
}

impl LanguageModel for ScriptedLlm {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.log.lock().unwrap_or_else(|e| e.into_inner()).push(request.clone());
        let text = request.full_text();
        let script = self
            .rules
            .iter()
            .find(|(m, _)| m.matches(request, &text))
            .map(|(_, s)| s.clone())
            .unwrap_or(match request.task {
                LlmTask::Condense => Script::Reply(MOCK_CONDENSE_MARKER.to_string()),
                _ => Script::EchoTitles,
            });
        match script {
            Script::Reply(s) => Ok(s),
            Script::Fail(e) => Err(e),
            Script::EchoTitles => Ok(echo_titles(request.task, &text)),
        }
    }
}
