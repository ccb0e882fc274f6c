//! The `index` and `match` stages.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use fineforge_core::embfile::{read_embeddings, EmbeddingFile};
use fineforge_core::index::normalize;
use fineforge_core::{EmbeddingStore, PooledEmbeddingSet};
use rayon::prelude::*;

use crate::error::{PipelineError, Result};
use crate::io::{write_atomic_with, write_jsonl};
use crate::manifest::StageReport;
use crate::pipeline::Pipeline;
use crate::records::CandidateSet;
use crate::stage::Stage;
use crate::stages::embed::split_row_id;

fn read_emb(path: &Path, stage: Stage) -> Result<EmbeddingFile> {
    let f = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => PipelineError::MissingInput(path.to_path_buf()),
        _ => PipelineError::io(path, e),
    })?;
    let (file, _) = read_embeddings(BufReader::new(f), false)
        .map_err(|e| PipelineError::stage(stage.name(), format!("{}: {e}", path.display())))?;
    Ok(file)
}

pub fn run_index(p: &Pipeline) -> Result<StageReport> {
    let stage = Stage::Index;
    let mut report = StageReport::new(stage.name());
    let file = read_emb(&p.layout.template_embeddings(), stage)?;
    report.records_in = file.len() as u64;
    let mut zero = 0u64;
    let rows: Vec<(String, Vec<f32>)> = file
        .rows()
        .filter(|(_, v)| {
            let wide: Vec<f64> = v.iter().map(|&x| f64::from(x)).collect();
            let ok = normalize(&wide).is_some();
            zero += u64::from(!ok);
            ok
        })
        .map(|(id, v)| (id.to_string(), v.to_vec()))
        .collect();
    report.filter("zero_vector", zero);
    let store = EmbeddingStore::build(file.dim, rows)
        .map_err(|e| PipelineError::stage(stage.name(), e))?;
    report.records_out = store.len() as u64;
    let out = store.to_file();
    write_atomic_with(&p.layout.index(), |w| {
        fineforge_core::embfile::write_embeddings(w, &out, Some(true)).map_err(std::io::Error::other)
    })?;
    Ok(report)
}

/// Consecutive rows of one document regrouped into pooled sets.
fn pooled_sets(file: &EmbeddingFile) -> Result<Vec<(String, PooledEmbeddingSet)>> {
    let mut sets: Vec<(String, Vec<Vec<f64>>)> = Vec::new();
    for (row, v) in file.rows() {
        let (doc, k) = split_row_id(row).ok_or_else(|| {
            PipelineError::stage(Stage::Match.name(), format!("bad document row id {row:?}"))
        })?;
        let v: Vec<f64> = v.iter().map(|&x| f64::from(x)).collect();
        match sets.last_mut() {
            Some((id, rows)) if id == doc && rows.len() == k => rows.push(v),
            _ if k == 0 => sets.push((doc.to_string(), vec![v])),
            _ => {
                return Err(PipelineError::stage(
                    Stage::Match.name(),
                    format!("document rows out of order at {row:?}"),
                ))
            }
        }
    }
    Ok(sets
        .into_iter()
        .map(|(id, mut rows)| {
            let global = rows.remove(0);
            let set = PooledEmbeddingSet {
                global,
                chunks: rows,
                centers: Vec::new(),
            };
            (id, set)
        })
        .collect())
}

pub fn run_match(p: &Pipeline) -> Result<StageReport> {
    let stage = Stage::Match;
    let mut report = StageReport::new(stage.name());
    let store = EmbeddingStore::load(&p.layout.index())
        .map_err(|e| PipelineError::stage(stage.name(), e))?;
    let docs = pooled_sets(&read_emb(&p.layout.document_embeddings(), stage)?)?;
    report.records_in = docs.len() as u64;

    let matched: Vec<Result<CandidateSet>> = p.pool().install(|| {
        docs.par_iter()
            .map(|(id, set)| {
                let candidates = if store.is_empty() {
                    Vec::new()
                } else {
                    store
                        .match_document(set, id, &p.cfg.matching)
                        .map_err(|e| PipelineError::stage(stage.name(), e))?
                };
                Ok(CandidateSet {
                    document_id: id.clone(),
                    candidates,
                })
            })
            .collect()
    });
    let mut out = Vec::new();
    for m in matched {
        let m = m?;
        if m.candidates.is_empty() {
            report.filter("no_match", 1);
        } else {
            report.count("candidates", m.candidates.len() as u64);
            out.push(m);
        }
    }
    report.records_out = out.len() as u64;
    write_jsonl(&p.layout.candidates(), &out)?;
    Ok(report)
}
