//! Scores each expanded pair on the 1 to 5 rubric.

use fineforge_backends::roles::judge;

use crate::checkpoint::{checkpointed_map, Disposition};
use crate::error::Result;
use crate::io::read_jsonl;
use crate::manifest::StageReport;
use crate::pipeline::Pipeline;
use crate::records::{ExpandedRecord, JudgedRecord};
use crate::stage::Stage;

const STAGE: Stage = Stage::Judge;

pub fn run(p: &Pipeline, fingerprint: &str) -> Result<StageReport> {
    let records: Vec<ExpandedRecord> = read_jsonl(&p.layout.expanded())?;
    let backend = p.backend(&p.cfg.backends.judge)?;
    let tally = checkpointed_map(
        p,
        STAGE,
        fingerprint,
        &records,
        &p.layout.judged(),
        |r| format!("{}/{}/{}", r.document_id, r.template_id, r.chunk_index),
        |r| match judge(backend.as_ref(), &r.instruction, &r.answer) {
            Ok(score) => Ok(Disposition::KeepCounted(
                JudgedRecord {
                    expanded: r.clone(),
                    judge_score: score.score,
                    judge_rationale: score.rationale,
                },
                format!("score_{}", score.score),
            )),
            Err(e) => Disposition::from_role_error(STAGE, e),
        },
    )?;
    let mut report = StageReport::new(STAGE.name());
    report.records_in = records.len() as u64;
    tally.apply(&mut report);
    Ok(report)
}
