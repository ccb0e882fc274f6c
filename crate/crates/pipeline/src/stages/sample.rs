//! Picks templates per document, steering complexities toward the target.

use std::collections::HashMap;

use fineforge_core::sampler::{compute_weights, estimate_distribution, sample, ComplexityBucket};
use fineforge_core::CandidateMatch;

use crate::error::{PipelineError, Result};
use crate::io::{read_jsonl, write_jsonl};
use crate::manifest::StageReport;
use crate::pipeline::Pipeline;
use crate::records::CandidateSet;
use crate::stage::Stage;

const STAGE: Stage = Stage::Sample;

pub fn run(p: &Pipeline) -> Result<StageReport> {
    let mut report = StageReport::new(STAGE.name());
    let sets: Vec<CandidateSet> = read_jsonl(&p.layout.candidates())?;
    report.records_in = sets.len() as u64;
    let mut picks: Vec<CandidateMatch> = Vec::new();
    if !sets.is_empty() {
        let bank = p.load_bank()?;
        let complexity: HashMap<&str, usize> =
            bank.iter().map(|t| (t.id.as_str(), t.complexity())).collect();
        let target = match &p.cfg.sampler.target {
            Some(t) => t.clone(),
            None => estimate_distribution(bank.iter().map(|t| t.complexity()))
                .map_err(|e| PipelineError::stage(STAGE.name(), e))?,
        };
        for set in &sets {
            let complexities = set
                .candidates
                .iter()
                .map(|c| {
                    complexity.get(c.template_id.as_str()).copied().ok_or_else(|| {
                        PipelineError::stage(
                            STAGE.name(),
                            format!("candidate template {:?} not in bank", c.template_id),
                        )
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let weights = compute_weights(&complexities, &target)
                .map_err(|e| PipelineError::stage(STAGE.name(), e))?;
            if weights.degenerate {
                report.count("degenerate_weights", 1);
            }
            let chosen = sample(
                &set.candidates,
                &weights.weights,
                p.cfg.sampler.picks_per_document,
                p.cfg.seed,
                &set.document_id,
            );
            if chosen.is_empty() {
                report.filter("no_pick", 1);
                continue;
            }
            report.records_out += 1;
            for c in &chosen {
                let bucket = ComplexityBucket::of(complexity[c.template_id.as_str()]);
                report.count(&format!("complexity_{bucket}"), 1);
            }
            report.count("picks", chosen.len() as u64);
            picks.extend(chosen);
        }
    }
    write_jsonl(&p.layout.picks(), &picks)?;
    Ok(report)
}
