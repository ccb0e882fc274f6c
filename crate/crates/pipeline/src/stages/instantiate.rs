//! Fills each picked template from its document and drafts an answer.

use std::collections::HashMap;

use fineforge_backends::roles::instantiate;
use fineforge_backends::InstantiationStatus;
use fineforge_core::CandidateMatch;

use crate::checkpoint::{checkpointed_map, Disposition};
use crate::error::Result;
use crate::io::read_jsonl;
use crate::manifest::StageReport;
use crate::pipeline::Pipeline;
use crate::stage::Stage;

const STAGE: Stage = Stage::Instantiate;

pub fn run(p: &Pipeline, fingerprint: &str) -> Result<StageReport> {
    let picks: Vec<CandidateMatch> = read_jsonl(&p.layout.picks())?;
    let bank = p.load_bank()?;
    let docs = p.load_documents()?;
    let templates: HashMap<&str, _> = bank.iter().map(|t| (t.id.as_str(), t)).collect();
    let documents: HashMap<&str, _> = docs.iter().map(|d| (d.id.as_str(), d)).collect();
    let backend = p.backend(&p.cfg.backends.instantiator)?;

    let tally = checkpointed_map(
        p,
        STAGE,
        fingerprint,
        &picks,
        &p.layout.instantiations(),
        |c| format!("{}/{}/{}", c.document_id, c.template_id, c.chunk_index),
        |c| {
            let (Some(t), Some(d)) = (
                templates.get(c.template_id.as_str()),
                documents.get(c.document_id.as_str()),
            ) else {
                return Ok(Disposition::Dead {
                    reason: "unresolved_provenance".into(),
                    error: "template or document not found".into(),
                });
            };
            match instantiate(backend.as_ref(), t, d, c.chunk_index) {
                Ok(r) => {
                    let counter = match r.status {
                        InstantiationStatus::Instantiated => "instantiated",
                        InstantiationStatus::Incompatible => "incompatible",
                    };
                    Ok(Disposition::KeepCounted(r, counter.into()))
                }
                Err(e) => Disposition::from_role_error(STAGE, e),
            }
        },
    )?;
    let mut report = StageReport::new(STAGE.name());
    report.records_in = picks.len() as u64;
    tally.apply(&mut report);
    Ok(report)
}
