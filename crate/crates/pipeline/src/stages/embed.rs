//! Embeds template descriptions and documents. Documents are pooled into a
//! global embedding plus K chunk embeddings, stored as rows `"{id}#{k}"`.

use std::sync::Arc;

use fineforge_backends::roles::{embed_texts, embed_token_matrices, DimensionGuard};
use fineforge_backends::{ModelBackend, RoleError};
use fineforge_core::embfile::{write_embeddings, EmbeddingFile};
use fineforge_core::{pool, PooledEmbeddingSet, SourceDocument};
use rayon::prelude::*;

use crate::error::{PipelineError, Result};
use crate::io::{write_atomic_with, write_jsonl};
use crate::manifest::StageReport;
use crate::pipeline::Pipeline;
use crate::records::DeadLetter;
use crate::stage::Stage;

const STAGE: Stage = Stage::Embed;

/// Id of row `k` of a document's pooled set.
pub fn row_id(document_id: &str, k: usize) -> String {
    format!("{document_id}#{k}")
}

/// Splits a row id back into document id and chunk index.
pub fn split_row_id(row: &str) -> Option<(&str, usize)> {
    let (doc, k) = row.rsplit_once('#')?;
    Some((doc, k.parse().ok()?))
}

fn dead(key: &str, reason: &str, error: impl ToString) -> DeadLetter {
    DeadLetter {
        stage: STAGE.name().into(),
        key: key.into(),
        reason: reason.into(),
        error: error.to_string(),
    }
}

/// Role failures dead-letter every record of the batch; fatal ones abort.
fn batch_failure(keys: &[&str], e: RoleError) -> Result<Vec<DeadLetter>> {
    if e.is_fatal() {
        return Err(PipelineError::stage(STAGE.name(), e));
    }
    Ok(keys.iter().map(|k| dead(k, e.reason(), &e)).collect())
}

type Rows = Vec<(String, Vec<f32>)>;

fn embed_documents(
    p: &Pipeline,
    backend: &Arc<dyn ModelBackend>,
    guard: &DimensionGuard,
    batch: &[&SourceDocument],
) -> Result<(Rows, Vec<DeadLetter>)> {
    let texts: Vec<String> = batch.iter().map(|d| d.text.clone()).collect();
    let keys: Vec<&str> = batch.iter().map(|d| d.id.as_str()).collect();
    let pooled: Vec<std::result::Result<PooledEmbeddingSet, DeadLetter>> =
        match embed_token_matrices(backend.as_ref(), &texts, guard) {
            Ok(Some(mats)) => mats
                .iter()
                .zip(&keys)
                .map(|(m, k)| pool(m, &p.cfg.pooling).map_err(|e| dead(k, "pooling_error", e)))
                .collect(),
            Ok(None) => match embed_texts(backend.as_ref(), &texts, guard) {
                Ok(vectors) => vectors
                    .into_iter()
                    .map(|v| {
                        let v = v.into_iter().map(f64::from).collect();
                        Ok(PooledEmbeddingSet::from_single(v, p.cfg.pooling.chunks))
                    })
                    .collect(),
                Err(e) => return Ok((Vec::new(), batch_failure(&keys, e)?)),
            },
            Err(e) => return Ok((Vec::new(), batch_failure(&keys, e)?)),
        };
    let mut rows = Vec::new();
    let mut dead_letters = Vec::new();
    for (doc, set) in batch.iter().zip(pooled) {
        match set {
            Ok(set) => rows.extend(
                set.embeddings()
                    .enumerate()
                    .map(|(k, e)| (row_id(&doc.id, k), e.iter().map(|&x| x as f32).collect())),
            ),
            Err(letter) => dead_letters.push(letter),
        }
    }
    Ok((rows, dead_letters))
}

fn to_file(dim: usize, rows: Rows) -> Result<EmbeddingFile> {
    let mut ids = Vec::with_capacity(rows.len());
    let mut data = Vec::with_capacity(rows.len() * dim);
    for (id, v) in rows {
        ids.push(id);
        data.extend(v);
    }
    EmbeddingFile::new(dim, ids, data).map_err(|e| PipelineError::stage(STAGE.name(), e))
}

fn save(path: &std::path::Path, file: &EmbeddingFile) -> Result<()> {
    write_atomic_with(path, |w| write_embeddings(w, file, None).map_err(std::io::Error::other))
}

pub fn run(p: &Pipeline) -> Result<StageReport> {
    let mut report = StageReport::new(STAGE.name());
    let bank = p.load_bank()?;
    let docs = p.load_documents()?;
    report.records_in = (bank.len() + docs.len()) as u64;
    let backend = p.backend(&p.cfg.backends.embedder)?;
    let guard = DimensionGuard::new();
    let batch = p.cfg.embed_batch;

    let template_batches: Vec<Result<(Rows, Vec<DeadLetter>)>> = p.pool().install(|| {
        bank.par_chunks(batch)
            .map(|chunk| {
                let texts: Vec<String> =
                    chunk.iter().map(|t| t.compatible_doc_description.clone()).collect();
                match embed_texts(backend.as_ref(), &texts, &guard) {
                    Ok(vectors) => Ok((
                        chunk.iter().map(|t| t.id.clone()).zip(vectors).collect(),
                        Vec::new(),
                    )),
                    Err(e) => {
                        let keys: Vec<&str> = chunk.iter().map(|t| t.id.as_str()).collect();
                        Ok((Vec::new(), batch_failure(&keys, e)?))
                    }
                }
            })
            .collect()
    });

    let mut dead_letters = Vec::new();
    let mut empty = 0u64;
    let mut embeddable = Vec::new();
    for d in &docs {
        if d.text.trim().is_empty() {
            empty += 1;
        } else if d.id.contains('\n') {
            dead_letters.push(dead(&d.id, "invalid_id", "document id contains a newline"));
        } else {
            embeddable.push(d);
        }
    }
    let doc_batches: Vec<Result<(Rows, Vec<DeadLetter>)>> = p.pool().install(|| {
        embeddable
            .par_chunks(batch)
            .map(|chunk| embed_documents(p, &backend, &guard, chunk))
            .collect()
    });

    let mut template_rows = Vec::new();
    for r in template_batches {
        let (rows, dead) = r?;
        template_rows.extend(rows);
        dead_letters.extend(dead);
    }
    let mut doc_rows = Vec::new();
    for r in doc_batches {
        let (rows, dead) = r?;
        doc_rows.extend(rows);
        dead_letters.extend(dead);
    }

    let per_doc = p.cfg.pooling.chunks + 1;
    let dim = guard.dim().unwrap_or(0);
    report.count("dim", dim as u64);
    report.count("template_vectors", template_rows.len() as u64);
    report.count("document_vectors", doc_rows.len() as u64);
    report.records_out = (template_rows.len() + doc_rows.len() / per_doc) as u64;
    report.dead_lettered = dead_letters.len() as u64;
    report.filter("empty_document", empty);

    save(&p.layout.template_embeddings(), &to_file(dim, template_rows)?)?;
    save(&p.layout.document_embeddings(), &to_file(dim, doc_rows)?)?;
    write_jsonl(&p.layout.dead_letters(STAGE), &dead_letters)?;
    Ok(report)
}
