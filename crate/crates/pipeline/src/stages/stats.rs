//! Dataset analytics: template usage, template growth and chunk positions.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use fineforge_core::analytics::{
    chunk_position_correlation, fit_power_law, template_growth, usage_stats,
};
use fineforge_core::TrainingRecord;
use serde_json::{json, Value};

use crate::error::Result;
use crate::io::{read_jsonl, write_atomic};
use crate::manifest::StageReport;
use crate::pipeline::Pipeline;
use crate::records::PackedMeta;
use crate::stage::Stage;

const STAGE: Stage = Stage::Stats;

pub fn run(p: &Pipeline) -> Result<StageReport> {
    let mut report = StageReport::new(STAGE.name());
    let records: Vec<TrainingRecord> = read_jsonl(&p.layout.dataset())?;
    let metas: Vec<PackedMeta> = read_jsonl(&p.layout.packed_meta())?;
    report.records_in = records.len() as u64;
    report.records_out = records.len() as u64;

    let usage = usage_stats(records.iter().map(|r| r.template_id.as_str())).ok();
    let growth = template_growth(
        records
            .iter()
            .map(|r| (r.document_id.as_str(), r.template_id.as_str())),
    );
    let fit = fit_power_law(&growth).ok();
    let positions = chunk_position_correlation(
        metas
            .iter()
            .filter_map(|m| Some((m.chunk_index, m.excerpt_position?))),
    )
    .ok();
    let mut scores: BTreeMap<u8, u64> = BTreeMap::new();
    for r in &records {
        *scores.entry(r.judge_score).or_default() += 1;
    }

    let stats = json!({
        "records": records.len(),
        "total_tokens": records.iter().map(|r| r.token_count as u64).sum::<u64>(),
        "usage": usage.as_ref().map(|u| json!({
            "total_instructions": u.total_instructions,
            "unique_templates": u.unique_templates,
            "max_share": u.max_share,
            "uses_per_template_histogram": u.use_histogram(),
        })),
        "power_fit": fit.map(|f| json!({"a": f.a, "b": f.b, "r2": f.r2, "r2_space": "log-log"})),
        "chunk_positions": positions.as_ref().map(|s| serde_json::to_value(s).unwrap_or(Value::Null)),
        "judge_scores": scores,
    });
    let mut text = serde_json::to_string_pretty(&stats).expect("stats serialize");
    text.push('\n');
    write_atomic(&p.layout.stats(), text.as_bytes())?;

    let mut csv = String::from("x,y\n");
    for (x, y) in &growth {
        writeln!(csv, "{x},{y}").expect("string write");
    }
    write_atomic(&p.layout.power_fit_csv(), csv.as_bytes())?;

    let mut csv = String::from("k,mean_p\n");
    if let Some(s) = &positions {
        for (k, mean) in &s.per_chunk_mean {
            writeln!(csv, "{k},{mean}").expect("string write");
        }
    }
    write_atomic(&p.layout.chunk_positions_csv(), csv.as_bytes())?;
    Ok(report)
}
