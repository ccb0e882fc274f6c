//! Keeps pairs that pass the judge threshold and the excerpt ratio gate.

use crate::checkpoint::{checkpointed_map, Disposition};
use crate::error::Result;
use crate::io::read_jsonl;
use crate::manifest::StageReport;
use crate::pipeline::Pipeline;
use crate::records::JudgedRecord;
use crate::stage::Stage;
use crate::stages::expand::RATIO_BELOW_MIN;

const STAGE: Stage = Stage::Filter;

pub const JUDGE_BELOW_THRESHOLD: &str = "judge_below_threshold";

pub fn run(p: &Pipeline, fingerprint: &str) -> Result<StageReport> {
    let records: Vec<JudgedRecord> = read_jsonl(&p.layout.judged())?;
    let tally = checkpointed_map(
        p,
        STAGE,
        fingerprint,
        &records,
        &p.layout.filtered(),
        |r| format!("{}/{}/{}", r.expanded.document_id, r.expanded.template_id, r.expanded.chunk_index),
        |r| {
            Ok(if r.judge_score < p.cfg.judge_threshold {
                Disposition::Filter(JUDGE_BELOW_THRESHOLD)
            } else if r.expanded.excerpt_ratio < p.cfg.min_excerpt_ratio {
                Disposition::Filter(RATIO_BELOW_MIN)
            } else {
                Disposition::Keep(r.clone())
            })
        },
    )?;
    let mut report = StageReport::new(STAGE.name());
    report.records_in = records.len() as u64;
    tally.apply(&mut report);
    Ok(report)
}
