//! Builds the template bank: existing templates plus genericized queries,
//! minus anything overlapping the benchmark.

use std::collections::HashSet;

use fineforge_backends::roles::genericize_query;
use fineforge_core::decontaminate::Decontaminator;
use fineforge_core::template::TemplateRecord;
use fineforge_core::InstructionTemplate;
use rayon::prelude::*;
use serde_json::Value;

use crate::error::{PipelineError, Result};
use crate::io::{read_jsonl, write_jsonl};
use crate::manifest::StageReport;
use crate::pipeline::Pipeline;
use crate::records::{DeadLetter, QueryRecord};
use crate::stage::Stage;

const STAGE: Stage = Stage::Genericize;

fn dead(key: impl Into<String>, reason: &str, error: impl ToString) -> DeadLetter {
    DeadLetter {
        stage: STAGE.name().into(),
        key: key.into(),
        reason: reason.into(),
        error: error.to_string(),
    }
}

/// Benchmark lines are `{"text": ...}` objects, JSON strings, or raw text.
fn benchmark_texts(p: &Pipeline) -> Result<Vec<String>> {
    let Some(path) = &p.cfg.paths.benchmark else {
        return Ok(Vec::new());
    };
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| match serde_json::from_str::<Value>(line) {
            Ok(Value::String(s)) => s,
            Ok(Value::Object(o)) => match o.get("text") {
                Some(Value::String(s)) => s.clone(),
                _ => line.to_string(),
            },
            _ => line.to_string(),
        })
        .collect())
}

pub fn run(p: &Pipeline) -> Result<StageReport> {
    let mut report = StageReport::new(STAGE.name());
    let mut dead_letters = Vec::new();
    let mut candidates: Vec<InstructionTemplate> = Vec::new();

    let raw: Vec<Value> = read_jsonl(&p.cfg.paths.templates)?;
    report.records_in += raw.len() as u64;
    for (i, value) in raw.into_iter().enumerate() {
        let key = value
            .get("id")
            .and_then(Value::as_str)
            .map_or_else(|| format!("line {}", i + 1), str::to_string);
        let parsed = serde_json::from_value::<TemplateRecord>(value)
            .map_err(|e| e.to_string())
            .and_then(|r| InstructionTemplate::try_from(r).map_err(|e| e.to_string()));
        match parsed {
            Ok(t) => candidates.push(t),
            Err(e) => dead_letters.push(dead(key, "invalid_template", e)),
        }
    }

    if let Some(path) = &p.cfg.paths.queries {
        let queries: Vec<QueryRecord> = read_jsonl(path)?;
        report.records_in += queries.len() as u64;
        let backend = p.backend(&p.cfg.backends.genericizer)?;
        let results: Vec<_> = p.pool().install(|| {
            queries
                .par_iter()
                .map(|q| genericize_query(backend.as_ref(), &q.query))
                .collect()
        });
        for (q, result) in queries.iter().zip(results) {
            let source = q.source_dataset.clone().unwrap_or_else(|| "queries".into());
            match result {
                Ok(g) => {
                    let id = format!("q-{}", q.id);
                    match InstructionTemplate::new(
                        id,
                        source,
                        g.template_text,
                        g.compatible_doc_description,
                    ) {
                        Ok(t) => candidates.push(t),
                        Err(e) => dead_letters.push(dead(&q.id, "malformed_output", e)),
                    }
                }
                Err(e) if e.is_fatal() => return Err(PipelineError::stage(STAGE.name(), e)),
                Err(e) => dead_letters.push(dead(&q.id, e.reason(), &e)),
            }
        }
    }

    let mut seen = HashSet::new();
    let mut unique = Vec::with_capacity(candidates.len());
    for t in candidates {
        if t.id.contains('\n') {
            dead_letters.push(dead(t.id.clone(), "invalid_id", "template id contains a newline"));
        } else if seen.insert(t.id.clone()) {
            unique.push(t);
        } else {
            report.filter("duplicate_id", 1);
        }
    }

    let decon = Decontaminator::from_corpus(p.cfg.decontamination_n, benchmark_texts(p)?);
    let clean = decon.filter(unique);
    report.filter("contaminated", clean.dropped as u64);
    report.records_out = clean.kept.len() as u64;
    report.dead_lettered = dead_letters.len() as u64;

    let records: Vec<TemplateRecord> = clean.kept.iter().map(InstructionTemplate::to_record).collect();
    write_jsonl(&p.layout.bank(), &records)?;
    write_jsonl(&p.layout.dead_letters(STAGE), &dead_letters)?;
    Ok(report)
}
