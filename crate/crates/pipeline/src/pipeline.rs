//! Stage execution with fingerprint-based skipping and the run manifest.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use fineforge_backends::{build_backend, BackendConfig, MockOptions, ModelBackend};
use fineforge_core::template::TemplateRecord;
use fineforge_core::{InstructionTemplate, SourceDocument};
use serde_json::{json, Value};

use crate::config::PipelineConfig;
use crate::error::{PipelineError, Result};
use crate::io::{hash_file, read_jsonl, sha256_hex};
use crate::manifest::{Manifest, StageEntry, StageReport, StageStatus};
use crate::stage::{Layout, Stage};
use crate::stages;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Continue checkpointed stages from their last checkpoint.
    pub resume: bool,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    /// Stop a stage with [`PipelineError::Interrupted`] after it has written
    /// this many checkpoints. Used to exercise crash recovery.
    pub halt_after_checkpoints: Option<(Stage, usize)>,
}

pub struct Pipeline {
    pub cfg: PipelineConfig,
    pub opts: RunOptions,
    pub layout: Layout,
    pool: rayon::ThreadPool,
}

impl Pipeline {
    pub fn new(mut cfg: PipelineConfig, opts: RunOptions) -> Result<Self> {
        if let Some(seed) = opts.seed {
            cfg.seed = seed;
        }
        if let Some(w) = opts.workers {
            cfg.workers = w;
        }
        cfg.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .thread_name(|i| format!("fineforge-worker-{i}"))
            .build()
            .map_err(|e| PipelineError::Config(format!("worker pool: {e}")))?;
        let layout = Layout::new(&cfg.paths.work_dir, &cfg.paths.output_dir);
        Ok(Self {
            cfg,
            opts,
            layout,
            pool,
        })
    }

    pub fn pool(&self) -> &rayon::ThreadPool {
        &self.pool
    }

    pub fn backend(&self, cfg: &BackendConfig) -> Result<Arc<dyn ModelBackend>> {
        let defaults = MockOptions {
            seed: self.cfg.seed,
            chunks: self.cfg.pooling.chunks,
            ..MockOptions::default()
        };
        build_backend(cfg, &self.cfg.base_dir, &defaults)
            .map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn load_documents(&self) -> Result<Vec<SourceDocument>> {
        let path = &self.cfg.paths.documents;
        let docs: Vec<SourceDocument> = read_jsonl(path)?;
        let mut seen = HashSet::new();
        for d in &docs {
            if !seen.insert(d.id.as_str()) {
                return Err(PipelineError::Parse {
                    path: path.clone(),
                    line: 0,
                    message: format!("duplicate document id {:?}", d.id),
                });
            }
        }
        Ok(docs)
    }

    pub fn load_bank(&self) -> Result<Vec<InstructionTemplate>> {
        let path = self.layout.bank();
        let records: Vec<TemplateRecord> = read_jsonl(&path)?;
        records
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                InstructionTemplate::try_from(r).map_err(|e| PipelineError::Parse {
                    path: path.clone(),
                    line: i + 1,
                    message: e.to_string(),
                })
            })
            .collect()
    }

    fn external_inputs(&self, stage: Stage) -> Vec<PathBuf> {
        let p = &self.cfg.paths;
        match stage {
            Stage::Genericize => std::iter::once(p.templates.clone())
                .chain(p.queries.clone())
                .chain(p.benchmark.clone())
                .collect(),
            Stage::Describe | Stage::Embed | Stage::Instantiate | Stage::Pack => {
                vec![p.documents.clone()]
            }
            _ => Vec::new(),
        }
    }

    /// The configuration a stage's output depends on.
    fn stage_config(&self, stage: Stage) -> Value {
        let c = &self.cfg;
        match stage {
            Stage::Genericize => json!({"backend": c.backends.genericizer, "n": c.decontamination_n}),
            Stage::Describe => {
                json!({"backend": c.backends.describer, "max_docs": c.describe_max_docs})
            }
            Stage::Embed => json!({"backend": c.backends.embedder, "pooling": c.pooling}),
            Stage::Index => json!({}),
            Stage::Match => json!(c.matching),
            Stage::Sample => json!(c.sampler),
            Stage::Instantiate => {
                json!({"backend": c.backends.instantiator, "chunks": c.pooling.chunks})
            }
            Stage::Expand => json!({"min_excerpt_ratio": c.min_excerpt_ratio}),
            Stage::Judge => json!({"backend": c.backends.judge}),
            Stage::Filter => json!({
                "judge_threshold": c.judge_threshold,
                "min_excerpt_ratio": c.min_excerpt_ratio,
            }),
            Stage::Pack | Stage::Stats => json!({}),
        }
    }

    /// Hash of the stage's config, the seed, upstream fingerprints and the
    /// contents of its external inputs.
    pub fn fingerprint(&self, stage: Stage, manifest: &Manifest) -> Result<String> {
        let mut upstream = BTreeMap::new();
        for dep in stage.deps() {
            let entry = manifest.completed(dep.name()).ok_or_else(|| {
                PipelineError::MissingInput(self.layout.outputs(*dep).remove(0))
            })?;
            upstream.insert(dep.name(), entry.fingerprint.clone());
        }
        let mut inputs = BTreeMap::new();
        for path in self.external_inputs(stage) {
            if !path.exists() {
                return Err(PipelineError::MissingInput(path));
            }
            inputs.insert(path.display().to_string(), hash_file(&path)?);
        }
        let doc = json!({
            "stage": stage.name(),
            "config": self.stage_config(stage),
            "seed": self.cfg.seed,
            "upstream": upstream,
            "inputs": inputs,
        });
        Ok(sha256_hex(doc.to_string().as_bytes()))
    }

    fn output_hashes(&self, stage: Stage) -> Result<BTreeMap<String, String>> {
        self.layout
            .outputs(stage)
            .iter()
            .map(|p| Ok((self.relative(p), hash_file(p)?)))
            .collect()
    }

    fn relative(&self, p: &Path) -> String {
        p.strip_prefix(&self.cfg.base_dir)
            .unwrap_or(p)
            .display()
            .to_string()
    }

    fn up_to_date(&self, stage: Stage, fp: &str, manifest: &Manifest) -> bool {
        let Some(entry) = manifest.completed(stage.name()) else {
            return false;
        };
        entry.fingerprint == fp
            && self
                .output_hashes(stage)
                .is_ok_and(|hashes| hashes == entry.outputs)
    }

    pub fn run_stage(&self, stage: Stage) -> Result<StageReport> {
        let manifest_path = self.layout.manifest();
        let mut manifest = Manifest::load_or_default(&manifest_path)?;
        manifest.config_hash = self.cfg.hash();
        let fp = self.fingerprint(stage, &manifest)?;
        if self.up_to_date(stage, &fp, &manifest) {
            let mut report = manifest.stages[stage.name()].report.clone();
            report.skipped = true;
            tracing::info!(stage = stage.name(), "up to date, skipping");
            return Ok(report);
        }

        tracing::info!(stage = stage.name(), "running");
        let started = Instant::now();
        let result = self.dispatch(stage, &fp).and_then(|mut report| {
            report.wall_time_secs = started.elapsed().as_secs_f64();
            if !report.is_conserved() {
                return Err(PipelineError::stage(
                    stage.name(),
                    format!("record counts do not balance: {report:?}"),
                ));
            }
            Ok(report)
        });
        match result {
            Ok(report) => {
                let entry = StageEntry {
                    status: StageStatus::Complete,
                    fingerprint: fp,
                    outputs: self.output_hashes(stage)?,
                    report: report.clone(),
                    error: None,
                };
                manifest.stages.insert(stage.name().to_string(), entry);
                manifest.save(&manifest_path)?;
                tracing::info!(
                    stage = stage.name(),
                    records_in = report.records_in,
                    records_out = report.records_out,
                    dead = report.dead_lettered,
                    filtered = report.filtered_total(),
                    "done"
                );
                Ok(report)
            }
            Err(err) => {
                let mut report = StageReport::new(stage.name());
                report.wall_time_secs = started.elapsed().as_secs_f64();
                let entry = StageEntry {
                    status: StageStatus::Failed,
                    fingerprint: fp,
                    outputs: BTreeMap::new(),
                    report,
                    error: Some(err.to_string()),
                };
                manifest.stages.insert(stage.name().to_string(), entry);
                manifest.save(&manifest_path)?;
                Err(err)
            }
        }
    }

    fn dispatch(&self, stage: Stage, fp: &str) -> Result<StageReport> {
        match stage {
            Stage::Genericize => stages::genericize::run(self),
            Stage::Describe => stages::describe::run(self, fp),
            Stage::Embed => stages::embed::run(self),
            Stage::Index => stages::matching::run_index(self),
            Stage::Match => stages::matching::run_match(self),
            Stage::Sample => stages::sample::run(self),
            Stage::Instantiate => stages::instantiate::run(self, fp),
            Stage::Expand => stages::expand::run(self, fp),
            Stage::Judge => stages::judge::run(self, fp),
            Stage::Filter => stages::filter::run(self, fp),
            Stage::Pack => stages::pack::run(self),
            Stage::Stats => stages::stats::run(self),
        }
    }

    /// Runs every stage in dependency order, stopping at the first failure.
    pub fn run_all(&self) -> Result<Vec<StageReport>> {
        Stage::ALL.into_iter().map(|s| self.run_stage(s)).collect()
    }
}
