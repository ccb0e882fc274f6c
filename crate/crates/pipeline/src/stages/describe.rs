//! Describes a seeded sample of documents (silver data for a describer model).

use std::collections::HashSet;

use fineforge_backends::roles::describe_document;
use fineforge_core::seed::stable_hash;

use crate::checkpoint::{checkpointed_map, Disposition};
use crate::error::Result;
use crate::manifest::StageReport;
use crate::pipeline::Pipeline;
use crate::records::DescriptionRecord;
use crate::stage::Stage;

const STAGE: Stage = Stage::Describe;

pub fn run(p: &Pipeline, fingerprint: &str) -> Result<StageReport> {
    let docs = p.load_documents()?;
    let mut order: Vec<(u64, &str)> = docs
        .iter()
        .map(|d| (stable_hash(p.cfg.seed, &["describe", &d.id]), d.id.as_str()))
        .collect();
    order.sort_unstable();
    let chosen: HashSet<&str> = order
        .into_iter()
        .take(p.cfg.describe_max_docs)
        .map(|(_, id)| id)
        .collect();

    let cfg = &p.cfg.backends.describer;
    let backend = p.backend(cfg)?;
    let tally = checkpointed_map(
        p,
        STAGE,
        fingerprint,
        &docs,
        &p.layout.descriptions(),
        |d| d.id.clone(),
        |d| {
            if !chosen.contains(d.id.as_str()) {
                return Ok(Disposition::Filter("not_sampled"));
            }
            if d.text.trim().is_empty() {
                return Ok(Disposition::Filter("empty_document"));
            }
            match describe_document(backend.as_ref(), d, cfg.max_input_chars) {
                Ok(description) => Ok(Disposition::Keep(DescriptionRecord {
                    document_id: d.id.clone(),
                    description,
                })),
                Err(e) => Disposition::from_role_error(STAGE, e),
            }
        },
    )?;
    let mut report = StageReport::new(STAGE.name());
    report.records_in = docs.len() as u64;
    tally.apply(&mut report);
    Ok(report)
}
