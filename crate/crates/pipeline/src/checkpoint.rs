//! Batch processing with periodic checkpoints, for record-at-a-time stages.
//!
//! Outputs and dead letters are appended to `.partial` files. After every
//! batch both are synced and their lengths recorded in a checkpoint file, so
//! a resumed run cuts them back to the last checkpoint and carries on from
//! the next unprocessed record.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use fineforge_backends::RoleError;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};
use crate::io::{to_json_line, write_atomic, AppendFile};
use crate::pipeline::Pipeline;
use crate::records::DeadLetter;
use crate::stage::Stage;

/// What happened to one input record.
pub enum Disposition<O> {
    Keep(O),
    /// Kept, and counted under the given counter.
    KeepCounted(O, String),
    Filter(&'static str),
    Dead { reason: String, error: String },
}

impl<O> Disposition<O> {
    /// Dead-letters recoverable role failures; fatal ones stop the stage.
    pub fn from_role_error(stage: Stage, e: RoleError) -> Result<Self> {
        if e.is_fatal() {
            return Err(PipelineError::stage(stage.name(), e));
        }
        Ok(Disposition::Dead {
            reason: e.reason().to_string(),
            error: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub done: u64,
    pub out: u64,
    pub dead: u64,
    pub filtered: BTreeMap<String, u64>,
    pub counters: BTreeMap<String, u64>,
    /// Records already done by an interrupted run.
    #[serde(skip)]
    pub resumed_from: u64,
}

impl Tally {
    /// Copies the counts into `report`.
    pub fn apply(&self, report: &mut crate::manifest::StageReport) {
        report.records_out += self.out;
        report.dead_lettered += self.dead;
        for (reason, n) in &self.filtered {
            report.filter(reason, *n);
        }
        for (c, n) in &self.counters {
            report.count(c, *n);
        }
        if self.resumed_from > 0 {
            report.count("resumed_from", self.resumed_from);
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    fingerprint: String,
    out_bytes: u64,
    dead_bytes: u64,
    tally: Tally,
}

fn partial(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".partial");
    path.with_file_name(name)
}

/// Maps `f` over `inputs` in batches of `checkpoint_every`, in parallel
/// within a batch, writing kept records to `out_path` in input order.
pub fn checkpointed_map<I, O, K, F>(
    p: &Pipeline,
    stage: Stage,
    fingerprint: &str,
    inputs: &[I],
    out_path: &Path,
    key: K,
    f: F,
) -> Result<Tally>
where
    I: Sync,
    O: Serialize + Send,
    K: Fn(&I) -> String + Sync,
    F: Fn(&I) -> Result<Disposition<O>> + Sync,
{
    let ckpt_path = p.layout.checkpoint(stage);
    let dead_path = p.layout.dead_letters(stage);
    let resumed = if p.opts.resume {
        load_checkpoint(&ckpt_path, fingerprint, &partial(out_path), &partial(&dead_path))
    } else {
        None
    };
    let (mut tally, out_keep, dead_keep) = match resumed {
        Some(c) => {
            tracing::info!(stage = stage.name(), done = c.tally.done, "resuming from checkpoint");
            let mut tally = c.tally;
            tally.resumed_from = tally.done;
            (tally, c.out_bytes, c.dead_bytes)
        }
        None => (Tally::default(), 0, 0),
    };
    let mut out = AppendFile::open(&partial(out_path), out_keep)?;
    let mut dead = AppendFile::open(&partial(&dead_path), dead_keep)?;

    let start = usize::try_from(tally.done).unwrap_or(usize::MAX).min(inputs.len());
    let mut checkpoints = 0usize;
    for batch in inputs[start..].chunks(p.cfg.checkpoint_every) {
        let results: Vec<Result<Disposition<O>>> =
            p.pool().install(|| batch.par_iter().map(&f).collect());
        let mut out_buf = String::new();
        let mut dead_buf = String::new();
        for (input, result) in batch.iter().zip(results) {
            match result? {
                Disposition::Keep(o) => {
                    out_buf.push_str(&to_json_line(&o));
                    tally.out += 1;
                }
                Disposition::KeepCounted(o, counter) => {
                    out_buf.push_str(&to_json_line(&o));
                    tally.out += 1;
                    *tally.counters.entry(counter).or_default() += 1;
                }
                Disposition::Filter(reason) => {
                    *tally.filtered.entry(reason.to_string()).or_default() += 1;
                }
                Disposition::Dead { reason, error } => {
                    let letter = DeadLetter {
                        stage: stage.name().to_string(),
                        key: key(input),
                        reason,
                        error,
                    };
                    dead_buf.push_str(&to_json_line(&letter));
                    tally.dead += 1;
                }
            }
        }
        out.append(out_buf.as_bytes())?;
        dead.append(dead_buf.as_bytes())?;
        tally.done += batch.len() as u64;
        let ckpt = Checkpoint {
            fingerprint: fingerprint.to_string(),
            out_bytes: out.sync()?,
            dead_bytes: dead.sync()?,
            tally: tally.clone(),
        };
        write_atomic(&ckpt_path, &serde_json::to_vec(&ckpt).expect("checkpoint serializes"))?;
        checkpoints += 1;
        if p.opts.halt_after_checkpoints == Some((stage, checkpoints)) {
            return Err(PipelineError::Interrupted {
                stage: stage.name(),
                records: tally.done as usize,
            });
        }
    }
    out.finish(out_path)?;
    dead.finish(&dead_path)?;
    std::fs::remove_file(&ckpt_path).or_else(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Ok(()),
        _ => Err(PipelineError::io(&ckpt_path, e)),
    })?;
    Ok(tally)
}

/// The checkpoint, if it belongs to this exact stage configuration and both
/// partial files still hold everything it accounts for.
fn load_checkpoint(path: &Path, fingerprint: &str, out: &Path, dead: &Path) -> Option<Checkpoint> {
    let text = std::fs::read_to_string(path).ok()?;
    let c: Checkpoint = serde_json::from_str(&text).ok()?;
    let len = |p: &Path| std::fs::metadata(p).map(|m| m.len()).unwrap_or(0);
    (c.fingerprint == fingerprint && len(out) >= c.out_bytes && len(dead) >= c.dead_bytes)
        .then_some(c)
}
