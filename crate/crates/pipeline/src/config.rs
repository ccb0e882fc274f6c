//! Pipeline configuration: one JSON file, paths relative to its directory.

use std::path::{Path, PathBuf};

use fineforge_backends::BackendConfig;
use fineforge_core::decontaminate::DEFAULT_NGRAM;
use fineforge_core::excerpt::DEFAULT_MIN_EXCERPT_RATIO;
use fineforge_core::{MatchConfig, PoolingConfig, SamplerConfig};
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Existing template bank, `templates.jsonl`.
    pub templates: PathBuf,
    /// Raw user queries to genericize into more templates.
    #[serde(default)]
    pub queries: Option<PathBuf>,
    pub documents: PathBuf,
    /// Benchmark texts to decontaminate the bank against.
    #[serde(default)]
    pub benchmark: Option<PathBuf>,
    #[serde(default = "default_work_dir")]
    pub work_dir: PathBuf,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_work_dir() -> PathBuf {
    "work".into()
}

fn default_output_dir() -> PathBuf {
    "output".into()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Backends {
    pub genericizer: BackendConfig,
    pub describer: BackendConfig,
    pub embedder: BackendConfig,
    pub instantiator: BackendConfig,
    pub judge: BackendConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    #[serde(default, rename = "match")]
    pub matching: MatchConfig,
    #[serde(default)]
    pub pooling: PoolingConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub backends: Backends,
    #[serde(default = "default_judge_threshold")]
    pub judge_threshold: u8,
    #[serde(default = "default_min_ratio")]
    pub min_excerpt_ratio: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_ngram")]
    pub decontamination_n: usize,
    /// Cap on documents sent to the describer.
    #[serde(default = "default_describe_max")]
    pub describe_max_docs: usize,
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: usize,
    #[serde(default = "default_embed_batch")]
    pub embed_batch: usize,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Directory relative paths were resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_judge_threshold() -> u8 {
    4
}
fn default_min_ratio() -> f64 {
    DEFAULT_MIN_EXCERPT_RATIO
}
fn default_ngram() -> usize {
    DEFAULT_NGRAM
}
fn default_describe_max() -> usize {
    1000
}
fn default_checkpoint_every() -> usize {
    1000
}
fn default_embed_batch() -> usize {
    32
}
fn default_workers() -> usize {
    4
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("reading {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json(&text, base)
    }

    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: Self =
            serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.resolve_paths();
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self) {
        let base = self.base_dir.clone();
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let paths = &mut self.paths;
        fix(&mut paths.templates);
        fix(&mut paths.documents);
        fix(&mut paths.work_dir);
        fix(&mut paths.output_dir);
        if let Some(p) = paths.queries.as_mut() {
            fix(p);
        }
        if let Some(p) = paths.benchmark.as_mut() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if !(1..=5).contains(&self.judge_threshold) {
            return bad(format!("judge_threshold {} not in 1..=5", self.judge_threshold));
        }
        if !(0.0..=1.0).contains(&self.min_excerpt_ratio) {
            return bad(format!("min_excerpt_ratio {} not in [0, 1]", self.min_excerpt_ratio));
        }
        self.matching.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.pooling.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        for (name, v) in [
            ("decontamination_n", self.decontamination_n),
            ("checkpoint_every", self.checkpoint_every),
            ("embed_batch", self.embed_batch),
            ("workers", self.workers),
            ("sampler.picks_per_document", self.sampler.picks_per_document),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        let p = &self.paths;
        let mut all: Vec<&Path> = vec![&p.templates, &p.documents, &p.work_dir, &p.output_dir];
        all.extend(p.queries.as_deref());
        all.extend(p.benchmark.as_deref());
        for (i, a) in all.iter().enumerate() {
            if all[i + 1..].contains(a) {
                return bad(format!("path {} is used twice", a.display()));
            }
        }
        Ok(())
    }

    /// Hash of the whole configuration, for the run manifest.
    pub fn hash(&self) -> String {
        crate::io::sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"paths": {"templates": "t.jsonl", "documents": "d.jsonl"}}"#;

    #[test]
    fn defaults_and_relative_paths() {
        let cfg = PipelineConfig::from_json(MINIMAL, Path::new("/data")).unwrap();
        assert_eq!(cfg.paths.templates, Path::new("/data/t.jsonl"));
        assert_eq!(cfg.paths.work_dir, Path::new("/data/work"));
        assert_eq!(cfg.matching.threshold, 0.865);
        assert_eq!(cfg.pooling.chunks, 5);
        assert_eq!(cfg.judge_threshold, 4);
        assert_eq!(cfg.min_excerpt_ratio, 0.8);
        assert_eq!(cfg.sampler.picks_per_document, 6);
        assert!(cfg.backends.judge.is_mock());
    }

    #[test]
    fn rejects_bad_values() {
        let cases = [
            r#"{"paths": {"templates": "t", "documents": "d"}, "judge_threshold": 6}"#,
            r#"{"paths": {"templates": "t", "documents": "d"}, "min_excerpt_ratio": 1.5}"#,
            r#"{"paths": {"templates": "t", "documents": "d"}, "match": {"threshold": 2.0}}"#,
            r#"{"paths": {"templates": "t", "documents": "t"}}"#,
            r#"{"paths": {"templates": "t", "documents": "d"}, "workers": 0}"#,
            r#"{"paths": {"templates": "t", "documents": "d"}, "typo": 1}"#,
        ];
        for c in cases {
            assert!(PipelineConfig::from_json(c, Path::new(".")).unwrap_err().is_config(), "{c}");
        }
    }
}
