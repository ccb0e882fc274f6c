//! Per-document token budgeting with rollover, and the chat template.
//!
//! Each document may contribute instruction-answer pairs whose total token
//! count does not exceed the document's own token count plus whatever budget
//! earlier documents left unused.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::record_rng;
use crate::tokenize::Tokenizer;

pub const INSTRUCTION_PREFIX: &str = "Instruction: ";
pub const ANSWER_SEPARATOR: &str = "\n\nAnswer: ";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PackError {
    #[error("instruction is empty")]
    EmptyInstruction,
    #[error("answer is empty")]
    EmptyAnswer,
}

/// `"Instruction: {instruction}\n\nAnswer: {answer}"`, byte for byte.
pub fn format_record(instruction: &str, answer: &str) -> Result<String, PackError> {
    if instruction.is_empty() {
        return Err(PackError::EmptyInstruction);
    }
    if answer.is_empty() {
        return Err(PackError::EmptyAnswer);
    }
    Ok(format!("{INSTRUCTION_PREFIX}{instruction}{ANSWER_SEPARATOR}{answer}"))
}

/// One line of `dataset.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub text: String,
    pub token_count: usize,
    pub document_id: String,
    pub template_id: String,
    pub chunk_index: usize,
    pub judge_score: u8,
    pub excerpt_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub document_id: String,
    pub template_id: String,
    pub chunk_index: usize,
    pub judge_score: u8,
    pub excerpt_ratio: f64,
}

impl TrainingRecord {
    /// Formats the pair and counts its tokens, template text included.
    pub fn build(
        instruction: &str,
        answer: &str,
        provenance: Provenance,
        tokenizer: &dyn Tokenizer,
    ) -> Result<Self, PackError> {
        let text = format_record(instruction, answer)?;
        let token_count = tokenizer.count_tokens(&text);
        Ok(Self {
            text,
            token_count,
            document_id: provenance.document_id,
            template_id: provenance.template_id,
            chunk_index: provenance.chunk_index,
            judge_score: provenance.judge_score,
            excerpt_ratio: provenance.excerpt_ratio,
        })
    }
}

pub trait TokenCost {
    fn token_cost(&self) -> usize;
}

impl TokenCost for TrainingRecord {
    fn token_cost(&self) -> usize {
        self.token_count
    }
}

impl TokenCost for usize {
    fn token_cost(&self) -> usize {
        *self
    }
}

/// Unused budget carried to later documents.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenBudgetState {
    pub carry: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PackOutcome<T> {
    /// Kept pairs in their original order.
    pub kept: Vec<T>,
    pub state: TokenBudgetState,
    pub kept_tokens: u64,
}

/// Visits `pairs` in a seeded random order and keeps each one that still fits.
///
/// A document with no pairs leaves the carry untouched: its tokens do not
/// accrue to the budget.
pub fn pack_document<T: TokenCost>(
    pairs: Vec<T>,
    doc_tokens: u64,
    state: TokenBudgetState,
    seed: u64,
    document_id: &str,
) -> PackOutcome<T> {
    if pairs.is_empty() {
        return PackOutcome {
            kept: Vec::new(),
            state,
            kept_tokens: 0,
        };
    }
    let budget = doc_tokens + state.carry;
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut record_rng(seed, &["pack", document_id]));

    let mut remaining = budget;
    let mut keep = vec![false; pairs.len()];
    for i in order {
        let cost = pairs[i].token_cost() as u64;
        if cost <= remaining {
            remaining -= cost;
            keep[i] = true;
        }
    }
    let kept: Vec<T> = pairs
        .into_iter()
        .zip(keep)
        .filter_map(|(p, k)| k.then_some(p))
        .collect();
    PackOutcome {
        kept,
        state: TokenBudgetState { carry: remaining },
        kept_tokens: budget - remaining,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenize::WordTokenizer;

    #[test]
    fn format_is_byte_exact() {
        assert_eq!(format_record("A", "B").unwrap(), "Instruction: A\n\nAnswer: B");
        assert_eq!(
            format_record("line one\nline two", "B").unwrap(),
            "Instruction: line one\nline two\n\nAnswer: B"
        );
        assert_eq!(format_record("", "B"), Err(PackError::EmptyInstruction));
        assert_eq!(format_record("A", ""), Err(PackError::EmptyAnswer));
    }

    #[test]
    fn forty_forty_forty_over_one_hundred() {
        let out = pack_document(vec![40usize, 40, 40], 100, TokenBudgetState::default(), 1, "d");
        assert_eq!(out.kept.len(), 2);
        assert_eq!(out.state.carry, 20);
        assert_eq!(out.kept_tokens, 80);
    }

    #[test]
    fn barren_document_keeps_carry() {
        let state = TokenBudgetState { carry: 17 };
        let out = pack_document(Vec::<usize>::new(), 500, state, 1, "d");
        assert!(out.kept.is_empty());
        assert_eq!(out.state, state);
    }

    #[test]
    fn oversized_pair_is_skipped() {
        let out = pack_document(vec![200usize], 100, TokenBudgetState { carry: 30 }, 1, "d");
        assert!(out.kept.is_empty());
        assert_eq!(out.state.carry, 130);
    }

    #[test]
    fn carry_extends_budget() {
        let out = pack_document(vec![60usize, 60], 100, TokenBudgetState { carry: 20 }, 3, "d");
        assert_eq!(out.kept.len(), 2);
        assert_eq!(out.state.carry, 0);
    }

    #[test]
    fn seeded_order_is_deterministic() {
        let pairs: Vec<usize> = (1..=12).map(|i| i * 7).collect();
        let a = pack_document(pairs.clone(), 150, TokenBudgetState::default(), 11, "doc");
        let b = pack_document(pairs, 150, TokenBudgetState::default(), 11, "doc");
        assert_eq!(a, b);
    }

    #[test]
    fn record_counts_template_tokens() {
        let prov = Provenance {
            document_id: "d".into(),
            template_id: "t".into(),
            chunk_index: 2,
            judge_score: 5,
            excerpt_ratio: 0.9,
        };
        let r = TrainingRecord::build("what is x", "x is y", prov, &WordTokenizer).unwrap();
        // Instruction : what is x Answer : x is y
        assert_eq!(r.token_count, 10);
        assert_eq!(r.token_count, WordTokenizer.count_tokens(&r.text));
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.starts_with(r#"{"text":"#));
        assert!(json.contains(r#""token_count":10,"document_id":"d","template_id":"t","chunk_index":2,"judge_score":5,"excerpt_ratio":0.9}"#));
    }
}
