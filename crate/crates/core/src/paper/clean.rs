use std::collections::BTreeSet;

use thiserror::Error;

use super::document::{parse_markdown, PaperDocument};
use crate::llm::{Gateway, LlmError, LlmRequest};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CleanError {
    #[error("cleaning lost content: {0}")]
    PreservationViolation(String),
    #[error(transparent)]
    Gateway(#[from] LlmError),
}

const KEEP_WORDS: &[&str] = &["abstract", "method", "approach", "experiment", "appendix", "algorithm", "references"];

/// Headings that survive cleaning regardless of the model's answer.
pub fn is_always_kept(heading: &str) -> bool {
    let h = heading.to_lowercase();
    KEEP_WORDS.iter().any(|w| h.contains(w))
}

const PROMPT: &str = "Remove sections that do not help reimplement the method, such as extended introductions and related work. \
Keep every equation, algorithm block, figure caption and citation in the sections you keep. \
Return the full cleaned paper as markdown and nothing else.";

fn preserved(original: &PaperDocument, candidate: &PaperDocument) -> Result<(), String> {
    if candidate.equations.len() < original.equations.len() {
        return Err(format!(
            "{} of {} equations remain",
            candidate.equations.len(),
            original.equations.len()
        ));
    }
    let sources: BTreeSet<&str> = candidate.equations.iter().map(|e| e.source.as_str()).collect();
    if let Some(e) = original.equations.iter().find(|e| !sources.contains(e.source.as_str())) {
        return Err(format!("equation {} is missing", e.index + 1));
    }
    let algos: BTreeSet<&str> = candidate.algorithm_blocks.iter().map(|a| a.trim()).collect();
    if original.algorithm_blocks.iter().any(|a| !algos.contains(a.trim())) {
        return Err("an algorithm block is missing".into());
    }
    for key in candidate.cited_keys() {
        if original.reference(&key).is_some() && candidate.reference(&key).is_none() {
            return Err(format!("reference `{key}` is cited but was dropped"));
        }
    }
    if candidate.len() > original.len() {
        return Err("cleaned document is longer than the original".into());
    }
    Ok(())
}

/// Drop irrelevant sections. The model proposes a cleaned document; the
/// sections it removed are then cut from the original, except headings on
/// the keep-list. Both the proposal and the result must keep every
/// equation, algorithm block and cited reference.
pub fn clean_document(doc: &PaperDocument, gateway: &Gateway) -> Result<PaperDocument, CleanError> {
    let req = LlmRequest::new("clean", gateway.model_for("clean"))
        .system(PROMPT)
        .user(doc.to_markdown());
    let resp = gateway.complete(&req)?;
    let proposal = parse_markdown(&resp.text)
        .map_err(|e| CleanError::PreservationViolation(format!("cleaned output does not parse: {e}")))?;
    preserved(doc, &proposal).map_err(CleanError::PreservationViolation)?;

    let kept: BTreeSet<&str> = proposal.headings.iter().map(|h| h.text.trim()).collect();
    let drop: BTreeSet<usize> = doc
        .sections()
        .into_iter()
        .map(|s| s.heading)
        .filter(|h| {
            let text = doc.headings[*h].text.trim();
            !kept.contains(text) && !is_always_kept(text)
        })
        .collect();
    if drop.is_empty() {
        return Ok(doc.clone());
    }
    let cleaned = doc.without_sections(&drop);
    preserved(doc, &cleaned).map_err(CleanError::PreservationViolation)?;
    Ok(cleaned)
}
