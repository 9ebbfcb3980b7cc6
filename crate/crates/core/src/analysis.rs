//! Per-paper summaries and chained literature reviews over a saved set.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::PaperRecord;
use crate::llm::{ChatMessage, ChatRequest, LanguageModel, LlmTask};
use crate::rag::{fit_placeholder, render_paper_block, Keep, RagError, TokenBudget};
use crate::saved::{bib_entries, BibEntry};
use crate::templates::PromptTemplate;

/// Concurrent per-paper summary calls.
pub const SUMMARY_PARALLELISM: usize = 4;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Prompt(#[from] RagError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaperSummary {
    pub paper_id: String,
    /// Empty when the call failed.
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl PaperSummary {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiteratureReviewResult {
    pub per_paper_summaries: Vec<PaperSummary>,
    pub synthesis: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthesis_error: Option<String>,
    pub bibliography: Vec<BibEntry>,
}

fn one_request(template: &PromptTemplate, content: &str, task: LlmTask, budget: &TokenBudget) -> Result<ChatRequest, RagError> {
    // Long content is cut from the end; the start of a paper's block carries
    // its title and authors.
    let prompt = fit_placeholder(&template.text, "papers", content, budget.prompt_limit(), 0, Keep::Head)?;
    Ok(ChatRequest::new(task, vec![ChatMessage::user(prompt)]))
}

/// One call per paper, metadata only, results in input order. A failed call
/// yields an entry with `error` set; the rest still run.
pub fn summarize(
    records: &[&PaperRecord],
    template: &PromptTemplate,
    llm: &dyn LanguageModel,
    budget: &TokenBudget,
) -> Result<Vec<PaperSummary>, AnalysisError> {
    if records.is_empty() {
        return Err(AnalysisError::InvalidParameter("the saved set is empty".into()));
    }
    let requests: Vec<ChatRequest> = records
        .iter()
        .map(|r| one_request(template, &render_paper_block(r, None), LlmTask::Summarize, budget))
        .collect::<Result<_, _>>()?;
    let replies = crate::parallel::bounded_map(&requests, SUMMARY_PARALLELISM, |_, req| llm.complete(req));
    Ok(records
        .iter()
        .zip(replies)
        .map(|(r, reply)| match reply {
            Ok(text) => PaperSummary { paper_id: r.id.clone(), text, error: None },
            Err(e) => PaperSummary { paper_id: r.id.clone(), text: String::new(), error: Some(e.to_string()) },
        })
        .collect())
}

/// Summaries as the synthesis call sees them.
pub fn render_summaries(records: &[&PaperRecord], entries: &[BibEntry], summaries: &[PaperSummary]) -> String {
    let mut out = String::new();
    for ((r, e), s) in records.iter().zip(entries).zip(summaries) {
        out.push_str(&format!("[{}] Title: {}\n", e.key, r.title));
        if let Some(y) = r.year {
            out.push_str(&format!("Year: {y}\n"));
        }
        if s.failed() {
            out.push_str("Summary: (unavailable)\n\n");
        } else {
            out.push_str(&format!("Summary: {}\n\n", s.text.trim()));
        }
    }
    out
}

/// Summaries first, then a synthesis call over those summaries: exactly
/// `n + 1` model calls. The bibliography is built from metadata only.
pub fn literature_review(
    records: &[&PaperRecord],
    summarize_template: &PromptTemplate,
    review_template: &PromptTemplate,
    llm: &dyn LanguageModel,
    budget: &TokenBudget,
) -> Result<LiteratureReviewResult, AnalysisError> {
    let per_paper_summaries = summarize(records, summarize_template, llm, budget)?;
    let bibliography = bib_entries(records);
    let context = render_summaries(records, &bibliography, &per_paper_summaries);
    let request = one_request(review_template, &context, LlmTask::Synthesize, budget)?;
    let (synthesis, synthesis_error) = match llm.complete(&request) {
        Ok(text) => (text, None),
        Err(e) => (String::new(), Some(e.to_string())),
    };
    Ok(LiteratureReviewResult { per_paper_summaries, synthesis, synthesis_error, bibliography })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{LlmError, Matcher, Script, ScriptedLlm};
    use crate::saved::export_bibtex;
    use crate::templates::{TemplateName, TemplateStore};

    fn rec(id: &str, title: &str) -> PaperRecord {
        PaperRecord {
            id: id.into(),
            title: title.into(),
            abstract_text: "An abstract.".into(),
            authors: vec!["Sam Writer".into()],
            keywords: vec![],
            venue: String::new(),
            year: Some(2022),
            citation_count: None,
            source_url: None,
        }
    }

    fn templates() -> (PromptTemplate, PromptTemplate) {
        let t = TemplateStore::in_memory();
        (t.get(TemplateName::Summarize), t.get(TemplateName::LiteratureReview))
    }

    #[test]
    fn summaries_in_order() {
        let rs = [rec("p1", "Alpha"), rec("p2", "Beta"), rec("p3", "Gamma")];
        let refs: Vec<&PaperRecord> = rs.iter().collect();
        let llm = ScriptedLlm::new();
        let out = summarize(&refs, &templates().0, &llm, &TokenBudget::default()).unwrap();
        let texts: Vec<&str> = out.iter().map(|s| s.text.as_str()).collect();
        assert_eq!(texts, vec!["Summary of **Alpha**.", "Summary of **Beta**.", "Summary of **Gamma**."]);
        assert_eq!(llm.calls(), 3);
        assert!(matches!(summarize(&[], &templates().0, &llm, &TokenBudget::default()), Err(AnalysisError::InvalidParameter(_))));
    }

    #[test]
    fn one_failure_is_marked() {
        let rs = [rec("p1", "Alpha"), rec("p2", "Beta"), rec("p3", "Gamma")];
        let refs: Vec<&PaperRecord> = rs.iter().collect();
        let llm = ScriptedLlm::new().with_rule(Matcher::Contains("Title: Beta".into()), Script::Fail(LlmError::Transient("x".into())));
        let out = summarize(&refs, &templates().0, &llm, &TokenBudget::default()).unwrap();
        assert_eq!(out.iter().filter(|s| s.failed()).count(), 1);
        assert!(out[1].failed() && out[1].text.is_empty());
    }

    #[test]
    fn review_is_a_chain() {
        for n in [1usize, 7] {
            let rs: Vec<PaperRecord> = (0..n).map(|i| rec(&format!("p{i}"), &format!("Title number {i}"))).collect();
            let refs: Vec<&PaperRecord> = rs.iter().collect();
            let llm = ScriptedLlm::new();
            let (s, r) = templates();
            let out = literature_review(&refs, &s, &r, &llm, &TokenBudget::default()).unwrap();
            assert_eq!(llm.calls(), n + 1);
            assert_eq!(out.per_paper_summaries.len(), n);
            assert_eq!(out.bibliography.len(), n);
            assert!(!out.synthesis.is_empty());
            // The synthesis prompt carries summaries, not abstracts.
            let last = llm.requests().last().unwrap().full_text();
            assert_eq!(llm.requests().last().unwrap().task, LlmTask::Synthesize);
            assert!(last.contains("Summary: Summary of") && !last.contains("An abstract."));
            let keys: Vec<String> = out.bibliography.iter().map(|b| b.key.clone()).collect();
            let exported = export_bibtex(&refs);
            for k in &keys {
                assert!(exported.contains(&format!("{{{k},")));
            }
        }
    }

    #[test]
    fn synthesis_failure_keeps_summaries() {
        let rs = [rec("p1", "Alpha")];
        let refs: Vec<&PaperRecord> = rs.iter().collect();
        let llm = ScriptedLlm::new().with_rule(Matcher::Task(LlmTask::Synthesize), Script::Fail(LlmError::Transient("x".into())));
        let (s, r) = templates();
        let out = literature_review(&refs, &s, &r, &llm, &TokenBudget::default()).unwrap();
        assert_eq!(out.per_paper_summaries.len(), 1);
        assert!(out.synthesis.is_empty() && out.synthesis_error.is_some());
    }

    #[test]
    fn bibliography_ignores_llm_output() {
        let rs = [rec("p1", "Alpha"), rec("p2", "Alpha")];
        let refs: Vec<&PaperRecord> = rs.iter().collect();
        let (s, r) = templates();
        let a = literature_review(&refs, &s, &r, &ScriptedLlm::new(), &TokenBudget::default()).unwrap();
        let other = ScriptedLlm::new().with_rule(Matcher::Any, Script::Reply("anything".into()));
        let b = literature_review(&refs, &s, &r, &other, &TokenBudget::default()).unwrap();
        assert_eq!(a.bibliography, b.bibliography);
    }

    #[test]
    fn prompts_fit_budget() {
        let mut long = rec("p1", "Alpha");
        long.abstract_text = "word ".repeat(5000);
        let refs = vec![&long];
        let llm = ScriptedLlm::new();
        let budget = TokenBudget { model_limit: 600, reserve_for_answer: 100, history_budget: 100 };
        let (s, r) = templates();
        literature_review(&refs, &s, &r, &llm, &budget).unwrap();
        for req in llm.requests() {
            assert!(crate::rag::estimate_tokens(&req.full_text()) <= budget.prompt_limit());
        }
    }
}
