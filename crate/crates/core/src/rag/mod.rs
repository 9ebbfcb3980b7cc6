//! Retrieval-augmented chat.
//!
//! One chat turn: condense prior history (when there is any), embed the raw
//! message and retrieve the top-k papers, assemble a prompt that fits the
//! token budget, ask the model, and ground the titles in its answer.

mod session;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, PaperRecord};
use crate::embedding::{Embedder, EmbeddingError};
use crate::grounding::{self, GroundingReport};
use crate::index::{IndexError, SearchHit, VectorSearch};
use crate::llm::{ChatMessage, ChatRequest, LanguageModel, LlmError, LlmTask, MESSAGE_SEPARATOR};
use crate::templates::{TemplateName, TemplateStore};

pub use session::{
    is_valid_session_id, ChatSession, ChatTurn, Clock, SessionStore, SharedSession, SteppingClock, SystemClock,
    TurnRole,
};

/// Retrieval depth for chat context.
pub const DEFAULT_CHAT_K: usize = 8;

#[derive(Debug, Error)]
pub enum RagError {
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("prompt of {estimate} tokens exceeds the budget of {limit} even without context")]
    OversizeQuery { estimate: usize, limit: usize },
    #[error("invalid token budget: {0}")]
    InvalidBudget(String),
    #[error("retrieved paper {0} is not in the corpus")]
    UnknownPaper(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("session store io error: {0}")]
    Io(#[from] std::io::Error),
}

/// `ceil(chars / 4)`.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenBudget {
    pub model_limit: usize,
    pub reserve_for_answer: usize,
    pub history_budget: usize,
}

impl Default for TokenBudget {
    fn default() -> Self {
        Self { model_limit: 16000, reserve_for_answer: 1024, history_budget: 1500 }
    }
}

impl TokenBudget {
    pub fn validate(&self) -> Result<(), RagError> {
        if self.reserve_for_answer + self.history_budget >= self.model_limit {
            return Err(RagError::InvalidBudget(format!(
                "reserve_for_answer ({}) + history_budget ({}) must be below model_limit ({})",
                self.reserve_for_answer, self.history_budget, self.model_limit
            )));
        }
        Ok(())
    }

    /// Largest token estimate any prompt may have.
    pub fn prompt_limit(&self) -> usize {
        self.model_limit - self.reserve_for_answer
    }
}

/// Which end of an over-long value to keep when fitting it into a template.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Keep {
    Head,
    Tail,
}

fn keep_chars(s: &str, n: usize, keep: Keep) -> &str {
    let total = s.chars().count();
    if total <= n {
        return s;
    }
    match keep {
        Keep::Head => &s[..s.char_indices().nth(n).map_or(s.len(), |(i, _)| i)],
        Keep::Tail => &s[s.char_indices().nth(total - n).map_or(s.len(), |(i, _)| i)..],
    }
}

/// Renders `template` with `{key}` replaced by `value`, shortening `value`
/// as needed so that `extra_chars` plus the rendered text stays within
/// `max_tokens`.
pub fn fit_placeholder(
    template: &str,
    key: &str,
    value: &str,
    max_tokens: usize,
    extra_chars: usize,
    keep: Keep,
) -> Result<String, RagError> {
    let placeholder = format!("{{{key}}}");
    let uses = template.matches(placeholder.as_str()).count();
    let fixed = template.chars().count() - uses * placeholder.chars().count() + extra_chars;
    let budget_chars = max_tokens * 4;
    if fixed > budget_chars {
        return Err(RagError::OversizeQuery { estimate: fixed.div_ceil(4), limit: max_tokens });
    }
    let room = (budget_chars - fixed).checked_div(uses).unwrap_or(usize::MAX);
    Ok(template.replace(&placeholder, keep_chars(value, room, keep)))
}

/// Shortens text to at most `max_tokens`, cutting after the last sentence end
/// that fits, else at the last whitespace, else mid-word.
pub fn truncate_to_sentence(text: &str, max_tokens: usize) -> String {
    let text = text.trim();
    if estimate_tokens(text) <= max_tokens {
        return text.to_string();
    }
    let head = keep_chars(text, max_tokens * 4, Keep::Head);
    let bytes = head.as_bytes();
    let sentence_end = head.char_indices().rev().find_map(|(i, c)| {
        let next_is_space = bytes.get(i + 1).is_none_or(|b| b.is_ascii_whitespace());
        (matches!(c, '.' | '!' | '?') && next_is_space).then_some(i + 1)
    });
    if let Some(end) = sentence_end {
        return head[..end].to_string();
    }
    match head.rfind(char::is_whitespace) {
        Some(i) if i > 0 => head[..i].trim_end().to_string(),
        _ => head.to_string(),
    }
}

/// Metadata block for one paper as it appears in prompts.
pub fn render_paper_block(record: &PaperRecord, score: Option<f32>) -> String {
    let mut out = format!("Title: {}\n", record.title);
    if !record.authors.is_empty() {
        out.push_str(&format!("Authors: {}\n", record.authors.join(", ")));
    }
    if let Some(y) = record.year {
        out.push_str(&format!("Year: {y}\n"));
    }
    if !record.venue.is_empty() {
        out.push_str(&format!("Venue: {}\n", record.venue));
    }
    if let Some(s) = score {
        out.push_str(&format!("Score: {s:.4}\n"));
    }
    if !record.abstract_text.is_empty() {
        out.push_str(&format!("Abstract: {}\n", record.abstract_text));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextBlock {
    pub paper_id: String,
    pub score: f32,
    pub text: String,
}

/// Everything sent for one answer call, plus what was left out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_preamble: String,
    pub condensed_history: String,
    pub retrieved_context: Vec<ContextBlock>,
    pub user_query: String,
    pub token_estimate: usize,
    /// Hits that did not fit, in rank order.
    pub dropped_ids: Vec<String>,
}

const CONTEXT_HEADER: &str = "Retrieved papers:\n";
const BLOCK_SEPARATOR: &str = "\n";

fn history_section(condensed: &str) -> String {
    if condensed.is_empty() {
        String::new()
    } else {
        format!("Conversation summary:\n{condensed}\n\n")
    }
}

fn question_section(query: &str) -> String {
    format!("Question: {query}")
}

impl PromptBundle {
    pub fn user_message(&self) -> String {
        let mut out = history_section(&self.condensed_history);
        out.push_str(CONTEXT_HEADER);
        for b in &self.retrieved_context {
            out.push_str(&b.text);
            out.push_str(BLOCK_SEPARATOR);
        }
        out.push_str(&question_section(&self.user_query));
        out
    }

    pub fn request(&self) -> ChatRequest {
        ChatRequest::new(
            LlmTask::Answer,
            vec![ChatMessage::system(self.system_preamble.clone()), ChatMessage::user(self.user_message())],
        )
    }
}

/// Embeds the raw query and returns the top `k` papers.
pub fn retrieve_context(
    query: &str,
    index: &dyn VectorSearch,
    embedder: &dyn Embedder,
    k: usize,
) -> Result<Vec<SearchHit>, RagError> {
    let seed = embedder.embed_one(query)?;
    Ok(index.search(&seed, k, &HashSet::new())?)
}

/// Adds whole context blocks in rank order until the next would overflow
/// `model_limit - reserve_for_answer`.
pub fn assemble_prompt(
    query: &str,
    system_preamble: &str,
    condensed_history: &str,
    hits: &[SearchHit],
    corpus: &Corpus,
    budget: &TokenBudget,
) -> Result<PromptBundle, RagError> {
    let limit_chars = budget.prompt_limit() * 4;
    // The full text is system + separator + user message; block lengths add.
    let base_chars = system_preamble.chars().count()
        + MESSAGE_SEPARATOR.chars().count()
        + history_section(condensed_history).chars().count()
        + CONTEXT_HEADER.chars().count()
        + question_section(query).chars().count();
    if base_chars > limit_chars {
        return Err(RagError::OversizeQuery { estimate: base_chars.div_ceil(4), limit: budget.prompt_limit() });
    }
    let mut used = base_chars;
    let mut blocks = Vec::new();
    let mut dropped_ids = Vec::new();
    for hit in hits {
        let record = corpus.get(&hit.paper_id).map_err(|_| RagError::UnknownPaper(hit.paper_id.clone()))?;
        if !dropped_ids.is_empty() {
            dropped_ids.push(hit.paper_id.clone());
            continue;
        }
        let text = render_paper_block(record, Some(hit.score));
        let cost = text.chars().count() + BLOCK_SEPARATOR.len();
        if used + cost > limit_chars {
            dropped_ids.push(hit.paper_id.clone());
            continue;
        }
        used += cost;
        blocks.push(ContextBlock { paper_id: hit.paper_id.clone(), score: hit.score, text });
    }
    Ok(PromptBundle {
        system_preamble: system_preamble.to_string(),
        condensed_history: condensed_history.to_string(),
        retrieved_context: blocks,
        user_query: query.to_string(),
        token_estimate: used.div_ceil(4),
        dropped_ids,
    })
}

fn transcript(session: &ChatSession) -> String {
    let mut out = String::new();
    if !session.condensed_history.is_empty() {
        out.push_str(&format!("Earlier summary: {}\n\n", session.condensed_history));
    }
    for t in &session.turns[session.condensed_through.min(session.turns.len())..] {
        let who = match t.role {
            TurnRole::User => "User",
            TurnRole::Assistant => "Assistant",
        };
        out.push_str(&format!("{who}: {}\n", grounding::strip_markup(&t.text)));
    }
    out
}

/// Folds the prior summary and the turns since the last condensation into a
/// new summary of at most `history_budget` tokens. On failure the session is
/// left unchanged.
pub fn condense_history(
    session: &mut ChatSession,
    llm: &dyn LanguageModel,
    templates: &TemplateStore,
    budget: &TokenBudget,
) -> Result<(), RagError> {
    if session.exchanges() == 0 {
        return Err(RagError::Precondition("condensation needs at least one completed exchange".into()));
    }
    let template = templates.get(TemplateName::Condense);
    // The oldest material is dropped first when the transcript is too long.
    let prompt = fit_placeholder(&template.text, "history", &transcript(session), budget.prompt_limit(), 0, Keep::Tail)?;
    let reply = llm.complete(&ChatRequest::new(LlmTask::Condense, vec![ChatMessage::user(prompt)]))?;
    session.condensed_history = truncate_to_sentence(&reply, budget.history_budget);
    session.condensed_through = session.turns.len();
    Ok(())
}

/// Shared inputs for a chat turn.
pub struct ChatContext<'a> {
    pub corpus: &'a Corpus,
    pub index: &'a dyn VectorSearch,
    pub embedder: &'a dyn Embedder,
    pub llm: &'a dyn LanguageModel,
    pub templates: &'a TemplateStore,
    pub budget: TokenBudget,
    pub clock: &'a dyn Clock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatOutcome {
    pub reply: ChatTurn,
    pub grounding: GroundingReport,
    pub context: Vec<SearchHit>,
    pub dropped_ids: Vec<String>,
    pub token_estimate: usize,
    pub llm_calls: usize,
}

/// Runs one turn. Both turns are appended only if every stage succeeds.
pub fn chat(ctx: &ChatContext<'_>, session: &mut ChatSession, message: &str) -> Result<ChatOutcome, RagError> {
    ctx.budget.validate()?;
    let message = message.trim();
    if message.is_empty() {
        return Err(RagError::BadRequest("message is empty".into()));
    }
    let mut work = session.clone();
    let mut llm_calls = 0;
    if work.exchanges() > 0 {
        llm_calls += 1;
        condense_history(&mut work, ctx.llm, ctx.templates, &ctx.budget)?;
    }
    let hits = retrieve_context(message, ctx.index, ctx.embedder, work.k)?;
    let system = ctx.templates.get(TemplateName::ChatSystem).render(&[("query", message)]);
    let bundle = assemble_prompt(message, &system, &work.condensed_history, &hits, ctx.corpus, &ctx.budget)?;
    llm_calls += 1;
    let answer = ctx.llm.complete(&bundle.request())?;
    if answer.trim().is_empty() {
        return Err(RagError::Llm(LlmError::Protocol("empty completion".into())));
    }
    let (marked, report) = grounding::annotate(&answer, ctx.corpus);
    work.push_turn(TurnRole::User, message.to_string(), ctx.clock);
    work.push_turn(TurnRole::Assistant, marked, ctx.clock);
    let reply = work.turns.last().cloned().expect("assistant turn just pushed");
    *session = work;
    let context = bundle.retrieved_context.iter().map(|b| SearchHit { paper_id: b.paper_id.clone(), score: b.score }).collect();
    Ok(ChatOutcome {
        reply,
        grounding: report,
        context,
        dropped_ids: bundle.dropped_ids,
        token_estimate: bundle.token_estimate,
        llm_calls,
    })
}
