//! Applies the per-document token budget and writes the final dataset.

use std::collections::HashMap;

use fineforge_core::packer::{pack_document, Provenance, TokenCost};
use fineforge_core::{TokenBudgetState, TrainingRecord, WordTokenizer};

use crate::error::{PipelineError, Result};
use crate::io::{read_jsonl, write_jsonl};
use crate::manifest::StageReport;
use crate::pipeline::Pipeline;
use crate::records::{JudgedRecord, PackedMeta};
use crate::stage::Stage;

const STAGE: Stage = Stage::Pack;

pub fn run(p: &Pipeline) -> Result<StageReport> {
    let mut report = StageReport::new(STAGE.name());
    let pairs: Vec<JudgedRecord> = read_jsonl(&p.layout.filtered())?;
    let docs = p.load_documents()?;
    report.records_in = pairs.len() as u64;

    let mut by_doc: HashMap<&str, Vec<Pair>> = HashMap::new();
    for r in &pairs {
        let e = &r.expanded;
        let provenance = Provenance {
            document_id: e.document_id.clone(),
            template_id: e.template_id.clone(),
            chunk_index: e.chunk_index,
            judge_score: r.judge_score,
            excerpt_ratio: e.excerpt_ratio,
        };
        let record = TrainingRecord::build(&e.instruction, &e.answer, provenance, &WordTokenizer)
            .map_err(|err| PipelineError::stage(STAGE.name(), err))?;
        let meta = PackedMeta {
            document_id: e.document_id.clone(),
            template_id: e.template_id.clone(),
            chunk_index: e.chunk_index,
            excerpt_position: e.excerpt_position,
        };
        by_doc.entry(e.document_id.as_str()).or_default().push(Pair { record, meta });
    }

    let mut state = TokenBudgetState::default();
    let mut dataset = Vec::new();
    let mut metas = Vec::new();
    let mut kept_tokens = 0u64;
    for doc in &docs {
        let group = by_doc.remove(doc.id.as_str()).unwrap_or_default();
        if !group.is_empty() {
            report.count("documents_with_pairs", 1);
        }
        let doc_tokens = doc.token_count(&WordTokenizer) as u64;
        let outcome = pack_document(group, doc_tokens, state, p.cfg.seed, &doc.id);
        state = outcome.state;
        kept_tokens += outcome.kept_tokens;
        for pair in outcome.kept {
            dataset.push(pair.record);
            metas.push(pair.meta);
        }
    }
    if let Some(orphan) = by_doc.keys().next() {
        return Err(PipelineError::stage(
            STAGE.name(),
            format!("pairs reference unknown document {orphan:?}"),
        ));
    }
    report.records_out = dataset.len() as u64;
    report.filter("over_budget", report.records_in - report.records_out);
    report.count("kept_tokens", kept_tokens);
    report.count("final_carry", state.carry);

    write_jsonl(&p.layout.dataset(), &dataset)?;
    write_jsonl(&p.layout.packed_meta(), &metas)?;
    Ok(report)
}

struct Pair {
    record: TrainingRecord,
    meta: PackedMeta,
}

impl TokenCost for Pair {
    fn token_cost(&self) -> usize {
        self.record.token_count
    }
}
