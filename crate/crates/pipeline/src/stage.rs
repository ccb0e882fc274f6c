//! Stage names, dependencies and on-disk layout.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Genericize,
    Describe,
    Embed,
    Index,
    Match,
    Sample,
    Instantiate,
    Expand,
    Judge,
    Filter,
    Pack,
    Stats,
}

impl Stage {
    /// Dependency order.
    pub const ALL: [Stage; 12] = [
        Stage::Genericize,
        Stage::Describe,
        Stage::Embed,
        Stage::Index,
        Stage::Match,
        Stage::Sample,
        Stage::Instantiate,
        Stage::Expand,
        Stage::Judge,
        Stage::Filter,
        Stage::Pack,
        Stage::Stats,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Genericize => "genericize",
            Stage::Describe => "describe",
            Stage::Embed => "embed",
            Stage::Index => "index",
            Stage::Match => "match",
            Stage::Sample => "sample",
            Stage::Instantiate => "instantiate",
            Stage::Expand => "expand",
            Stage::Judge => "judge",
            Stage::Filter => "filter",
            Stage::Pack => "pack",
            Stage::Stats => "stats",
        }
    }

    pub fn deps(self) -> &'static [Stage] {
        match self {
            Stage::Genericize | Stage::Describe => &[],
            Stage::Embed => &[Stage::Genericize],
            Stage::Index => &[Stage::Embed],
            Stage::Match => &[Stage::Index, Stage::Embed],
            Stage::Sample => &[Stage::Match, Stage::Genericize],
            Stage::Instantiate => &[Stage::Sample, Stage::Genericize],
            Stage::Expand => &[Stage::Instantiate],
            Stage::Judge => &[Stage::Expand],
            Stage::Filter => &[Stage::Judge],
            Stage::Pack => &[Stage::Filter],
            Stage::Stats => &[Stage::Pack],
        }
    }

    /// Whether the stage writes a dead-letter file.
    pub fn has_dead_letters(self) -> bool {
        matches!(
            self,
            Stage::Genericize
                | Stage::Describe
                | Stage::Embed
                | Stage::Instantiate
                | Stage::Expand
                | Stage::Judge
                | Stage::Filter
        )
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

/// Where every stage reads and writes.
#[derive(Debug, Clone)]
pub struct Layout {
    pub work: PathBuf,
    pub output: PathBuf,
}

impl Layout {
    pub fn new(work: &Path, output: &Path) -> Self {
        Self {
            work: work.to_path_buf(),
            output: output.to_path_buf(),
        }
    }

    pub fn manifest(&self) -> PathBuf {
        self.work.join("manifest.json")
    }
    pub fn bank(&self) -> PathBuf {
        self.work.join("bank.jsonl")
    }
    pub fn descriptions(&self) -> PathBuf {
        self.work.join("descriptions.jsonl")
    }
    pub fn template_embeddings(&self) -> PathBuf {
        self.work.join("templates.emb")
    }
    pub fn document_embeddings(&self) -> PathBuf {
        self.work.join("documents.emb")
    }
    pub fn index(&self) -> PathBuf {
        self.work.join("templates.fineidx")
    }
    pub fn candidates(&self) -> PathBuf {
        self.work.join("candidates.jsonl")
    }
    pub fn picks(&self) -> PathBuf {
        self.work.join("picks.jsonl")
    }
    pub fn instantiations(&self) -> PathBuf {
        self.work.join("instantiations.jsonl")
    }
    pub fn expanded(&self) -> PathBuf {
        self.work.join("expanded.jsonl")
    }
    pub fn judged(&self) -> PathBuf {
        self.work.join("judged.jsonl")
    }
    pub fn filtered(&self) -> PathBuf {
        self.work.join("filtered.jsonl")
    }
    pub fn packed_meta(&self) -> PathBuf {
        self.work.join("packed.jsonl")
    }
    pub fn dataset(&self) -> PathBuf {
        self.output.join("dataset.jsonl")
    }
    pub fn stats(&self) -> PathBuf {
        self.output.join("stats.json")
    }
    pub fn power_fit_csv(&self) -> PathBuf {
        self.output.join("power_fit.csv")
    }
    pub fn chunk_positions_csv(&self) -> PathBuf {
        self.output.join("chunk_positions.csv")
    }
    pub fn dead_letters(&self, stage: Stage) -> PathBuf {
        self.work.join("dead").join(format!("{stage}.jsonl"))
    }
    pub fn checkpoint(&self, stage: Stage) -> PathBuf {
        self.work.join("checkpoints").join(format!("{stage}.json"))
    }

    pub fn outputs(&self, stage: Stage) -> Vec<PathBuf> {
        let mut out = match stage {
            Stage::Genericize => vec![self.bank()],
            Stage::Describe => vec![self.descriptions()],
            Stage::Embed => vec![self.template_embeddings(), self.document_embeddings()],
            Stage::Index => vec![self.index()],
            Stage::Match => vec![self.candidates()],
            Stage::Sample => vec![self.picks()],
            Stage::Instantiate => vec![self.instantiations()],
            Stage::Expand => vec![self.expanded()],
            Stage::Judge => vec![self.judged()],
            Stage::Filter => vec![self.filtered()],
            Stage::Pack => vec![self.dataset(), self.packed_meta()],
            Stage::Stats => vec![self.stats(), self.power_fit_csv(), self.chunk_positions_csv()],
        };
        if stage.has_dead_letters() {
            out.push(self.dead_letters(stage));
        }
        out
    }
}
