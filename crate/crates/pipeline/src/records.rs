//! Intermediate JSONL record types.

use fineforge_core::CandidateMatch;
use serde::{Deserialize, Serialize};

/// One line of `queries.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub id: String,
    pub query: String,
    #[serde(default)]
    pub source_dataset: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptionRecord {
    pub document_id: String,
    pub description: String,
}

/// All retrieved templates for one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub document_id: String,
    pub candidates: Vec<CandidateMatch>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpandedRecord {
    pub document_id: String,
    pub template_id: String,
    pub chunk_index: usize,
    pub instruction: String,
    pub answer: String,
    pub excerpt_ratio: f64,
    /// Relative start of the earliest excerpt span in the document.
    pub excerpt_position: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgedRecord {
    #[serde(flatten)]
    pub expanded: ExpandedRecord,
    pub judge_score: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge_rationale: Option<String>,
}

/// Per-record analytics side data for `dataset.jsonl`, line for line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackedMeta {
    pub document_id: String,
    pub template_id: String,
    pub chunk_index: usize,
    pub excerpt_position: Option<f64>,
}

/// A record a stage could not process, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeadLetter {
    pub stage: String,
    pub key: String,
    pub reason: String,
    pub error: String,
}
