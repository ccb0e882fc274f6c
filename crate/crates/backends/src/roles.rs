//! Role operations: send a request through a backend and validate the reply.

use std::sync::atomic::{AtomicUsize, Ordering};

use fineforge_core::{
    parse_excerpt_markup, parse_template, InstructionTemplate, SourceDocument, TokenMatrix,
};
use serde::Deserialize;

use crate::backend::ModelBackend;
use crate::error::RoleError;
use crate::protocol::{
    GenericizedQuery, InstantiationResult, InstantiationStatus, JudgeScore,
};

/// Text of the outermost JSON object in a reply, tolerating code fences and
/// surrounding chatter.
fn json_object(reply: &str) -> Option<&str> {
    let start = reply.find('{')?;
    let end = reply.rfind('}')?;
    (start < end).then(|| &reply[start..=end])
}

#[derive(Deserialize)]
struct GenericizeReply {
    template: String,
    description: String,
}

pub fn genericize_query(backend: &dyn ModelBackend, query: &str) -> Result<GenericizedQuery, RoleError> {
    if query.trim().is_empty() {
        return Err(RoleError::Precondition("query is empty".into()));
    }
    let mut previous: Option<String> = None;
    for step in 0..backend.genericize_steps().max(1) {
        previous = Some(backend.genericize(query, step, previous.as_deref())?);
    }
    let reply = previous.unwrap_or_default();
    let parsed: GenericizeReply = json_object(&reply)
        .and_then(|j| serde_json::from_str(j).ok())
        .ok_or_else(|| RoleError::MalformedOutput(format!("expected template JSON, got {reply:?}")))?;
    let template_text = parsed.template.trim().to_string();
    let description = parsed.description.trim().to_string();
    parse_template(&template_text)
        .map_err(|e| RoleError::MalformedOutput(format!("template does not parse: {e}")))?;
    if template_text.is_empty() || description.is_empty() {
        return Err(RoleError::MalformedOutput("empty template or description".into()));
    }
    Ok(GenericizedQuery {
        template_text,
        compatible_doc_description: description,
    })
}

/// First `max_chars` characters of `text`.
pub fn truncate_chars(text: &str, max_chars: usize) -> &str {
    match text.char_indices().nth(max_chars) {
        Some((i, _)) => &text[..i],
        None => text,
    }
}

pub fn describe_document(
    backend: &dyn ModelBackend,
    doc: &SourceDocument,
    max_input_chars: usize,
) -> Result<String, RoleError> {
    if doc.text.trim().is_empty() {
        return Err(RoleError::Precondition(format!("document {} is empty", doc.id)));
    }
    let reply = backend.describe(truncate_chars(&doc.text, max_input_chars))?;
    let description = reply.trim();
    if description.is_empty() {
        return Err(RoleError::MalformedOutput("empty description".into()));
    }
    Ok(description.to_string())
}

/// Remembers the first embedding dimension seen and rejects any other.
#[derive(Debug, Default)]
pub struct DimensionGuard {
    dim: AtomicUsize,
}

impl DimensionGuard {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn expecting(dim: usize) -> Self {
        Self {
            dim: AtomicUsize::new(dim),
        }
    }

    pub fn dim(&self) -> Option<usize> {
        match self.dim.load(Ordering::SeqCst) {
            0 => None,
            d => Some(d),
        }
    }

    pub fn check(&self, got: usize) -> Result<(), RoleError> {
        if got == 0 {
            return Err(RoleError::MalformedOutput("empty embedding".into()));
        }
        match self.dim.compare_exchange(0, got, Ordering::SeqCst, Ordering::SeqCst) {
            Ok(_) => Ok(()),
            Err(expected) if expected == got => Ok(()),
            Err(expected) => Err(RoleError::DimensionDrift { expected, got }),
        }
    }
}

pub fn embed_texts(
    backend: &dyn ModelBackend,
    texts: &[String],
    guard: &DimensionGuard,
) -> Result<Vec<Vec<f32>>, RoleError> {
    if texts.is_empty() {
        return Err(RoleError::Precondition("empty embedding batch".into()));
    }
    let vectors = backend.embed(texts)?;
    if vectors.len() != texts.len() {
        return Err(RoleError::MalformedOutput(format!(
            "{} embeddings for {} texts",
            vectors.len(),
            texts.len()
        )));
    }
    for v in &vectors {
        guard.check(v.len())?;
    }
    Ok(vectors)
}

/// Token-level embeddings, or `None` when the backend does not provide them.
pub fn embed_token_matrices(
    backend: &dyn ModelBackend,
    texts: &[String],
    guard: &DimensionGuard,
) -> Result<Option<Vec<TokenMatrix>>, RoleError> {
    if texts.is_empty() {
        return Err(RoleError::Precondition("empty embedding batch".into()));
    }
    let Some(mats) = backend.embed_tokens(texts)? else {
        return Ok(None);
    };
    if mats.len() != texts.len() {
        return Err(RoleError::MalformedOutput(format!(
            "{} token matrices for {} texts",
            mats.len(),
            texts.len()
        )));
    }
    for m in &mats {
        guard.check(m.dim())?;
    }
    Ok(Some(mats))
}

#[derive(Deserialize)]
struct InstantiateReply {
    fills: Vec<String>,
    answer: String,
}

pub fn instantiate(
    backend: &dyn ModelBackend,
    template: &InstructionTemplate,
    doc: &SourceDocument,
    chunk_index: usize,
) -> Result<InstantiationResult, RoleError> {
    if doc.text.trim().is_empty() {
        return Err(RoleError::Precondition(format!("document {} is empty", doc.id)));
    }
    let reply = backend.instantiate(template, doc, chunk_index)?;
    let mut result = InstantiationResult {
        status: InstantiationStatus::Incompatible,
        instruction: None,
        answer_markup: None,
        template_id: template.id.clone(),
        document_id: doc.id.clone(),
        chunk_index,
    };
    let trimmed = reply.trim();
    if trimmed.eq_ignore_ascii_case("null") {
        return Ok(result);
    }
    let parsed: InstantiateReply = json_object(trimmed)
        .and_then(|j| serde_json::from_str(j).ok())
        .ok_or_else(|| {
            RoleError::MalformedOutput(format!("expected instantiation JSON, got {trimmed:?}"))
        })?;
    let instruction = template
        .instantiate(&parsed.fills)
        .map_err(|e| RoleError::MalformedOutput(e.to_string()))?;
    if parsed.answer.trim().is_empty() {
        return Err(RoleError::MalformedOutput("empty answer".into()));
    }
    parse_excerpt_markup(&parsed.answer)
        .map_err(|e| RoleError::MalformedOutput(format!("answer markup: {e}")))?;
    result.status = InstantiationStatus::Instantiated;
    result.instruction = Some(instruction);
    result.answer_markup = Some(parsed.answer);
    Ok(result)
}

/// Leading integer of a judge reply, which must be 1 to 5. Anything after it,
/// minus separator punctuation, is the rationale.
pub fn parse_judge_score(reply: &str) -> Result<JudgeScore, RoleError> {
    let s = reply.trim_start().trim_start_matches(['*', '#']);
    let digits = s.chars().take_while(char::is_ascii_digit).count();
    let score: u8 = s[..digits]
        .parse()
        .ok()
        .filter(|n| (1..=5).contains(n))
        .ok_or_else(|| RoleError::UnparseableScore(reply.to_string()))?;
    let rest = s[digits..]
        .trim_start_matches(|c: char| c.is_whitespace() || "*-:.,/)\u{2013}\u{2014}".contains(c))
        .trim_end();
    Ok(JudgeScore {
        score,
        rationale: (!rest.is_empty()).then(|| rest.to_string()),
    })
}

pub fn judge(backend: &dyn ModelBackend, instruction: &str, answer: &str) -> Result<JudgeScore, RoleError> {
    if instruction.trim().is_empty() || answer.trim().is_empty() {
        return Err(RoleError::Precondition("instruction or answer is empty".into()));
    }
    parse_judge_score(&backend.judge(instruction, answer)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn judge_scores() {
        let s = parse_judge_score("4 \u{2014} relevant").unwrap();
        assert_eq!(s.score, 4);
        assert_eq!(s.rationale.as_deref(), Some("relevant"));
        assert_eq!(parse_judge_score("  5").unwrap().rationale, None);
        assert_eq!(parse_judge_score("**3**/5").unwrap().score, 3);
        for bad in ["great", "0 - bad", "6", "", "45"] {
            assert!(
                matches!(parse_judge_score(bad), Err(RoleError::UnparseableScore(_))),
                "{bad:?}"
            );
        }
    }

    #[test]
    fn truncation_respects_char_boundaries() {
        assert_eq!(truncate_chars("h\u{e9}llo", 2), "h\u{e9}");
        assert_eq!(truncate_chars("abc", 10), "abc");
    }

    #[test]
    fn dimension_guard() {
        let g = DimensionGuard::new();
        assert_eq!(g.dim(), None);
        g.check(4).unwrap();
        g.check(4).unwrap();
        assert_eq!(g.check(5), Err(RoleError::DimensionDrift { expected: 4, got: 5 }));
    }

    #[test]
    fn json_object_strips_fences() {
        assert_eq!(json_object("```json\n{\"a\":1}\n```"), Some("{\"a\":1}"));
        assert_eq!(json_object("none"), None);
    }
}
