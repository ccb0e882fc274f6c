//! Replaces excerpt markup with the document spans it points at.

use std::collections::HashMap;

use fineforge_backends::{InstantiationResult, InstantiationStatus};
use fineforge_core::excerpt::{check_excerpt_ratio, expand_markup};

use crate::checkpoint::{checkpointed_map, Disposition};
use crate::error::Result;
use crate::io::read_jsonl;
use crate::manifest::StageReport;
use crate::pipeline::Pipeline;
use crate::records::ExpandedRecord;
use crate::stage::Stage;

const STAGE: Stage = Stage::Expand;

pub const RATIO_BELOW_MIN: &str = "excerpt_ratio_below_min";

pub fn run(p: &Pipeline, fingerprint: &str) -> Result<StageReport> {
    let results: Vec<InstantiationResult> = read_jsonl(&p.layout.instantiations())?;
    let docs = p.load_documents()?;
    let documents: HashMap<&str, _> = docs.iter().map(|d| (d.id.as_str(), d)).collect();

    let tally = checkpointed_map(
        p,
        STAGE,
        fingerprint,
        &results,
        &p.layout.expanded(),
        |r| format!("{}/{}/{}", r.document_id, r.template_id, r.chunk_index),
        |r| {
            if r.status == InstantiationStatus::Incompatible {
                return Ok(Disposition::Filter("incompatible"));
            }
            let (Some(instruction), Some(markup), Some(doc)) = (
                r.instruction.as_ref(),
                r.answer_markup.as_ref(),
                documents.get(r.document_id.as_str()),
            ) else {
                return Ok(Disposition::Dead {
                    reason: "incomplete_record".into(),
                    error: "missing instruction, answer or document".into(),
                });
            };
            let expanded = match expand_markup(markup, &doc.text) {
                Ok(e) => e,
                Err(e) => {
                    return Ok(Disposition::Dead {
                        reason: e.reason().into(),
                        error: e.to_string(),
                    })
                }
            };
            if !check_excerpt_ratio(&expanded, p.cfg.min_excerpt_ratio).passed() {
                return Ok(Disposition::Filter(RATIO_BELOW_MIN));
            }
            let excerpt_ratio = expanded.excerpt_ratio();
            let excerpt_position = expanded.excerpt_position(&doc.text);
            let answer = expanded.into_answer_text();
            if answer.trim().is_empty() {
                return Ok(Disposition::Dead {
                    reason: "empty_answer".into(),
                    error: "expanded answer is empty".into(),
                });
            }
            Ok(Disposition::Keep(ExpandedRecord {
                document_id: r.document_id.clone(),
                template_id: r.template_id.clone(),
                chunk_index: r.chunk_index,
                instruction: instruction.clone(),
                answer,
                excerpt_ratio,
                excerpt_position,
            }))
        },
    )?;
    let mut report = StageReport::new(STAGE.name());
    report.records_in = results.len() as u64;
    tally.apply(&mut report);
    Ok(report)
}
