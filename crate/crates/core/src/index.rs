//! Exact cosine-similarity index over template description embeddings.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embfile::{read_embeddings, write_embeddings, EmbeddingFile, FormatError};
use crate::pooling::PooledEmbeddingSet;

pub const DEFAULT_THRESHOLD: f64 = 0.865;
pub const DEFAULT_TOP_M: usize = 5;

const BLOCK_ROWS: usize = 256;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("vector for {id:?} has dimension {got}, expected {expected}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        got: usize,
    },
    #[error("duplicate template id {0:?}")]
    DuplicateId(String),
    #[error("zero vector for {0:?} cannot be normalized")]
    ZeroVector(String),
    #[error("invalid match config: {0}")]
    InvalidConfig(String),
    #[error("index file is not normalized")]
    NotNormalized,
    #[error(transparent)]
    Format(#[from] FormatError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchConfig {
    pub threshold: f64,
    pub top_m: usize,
    /// Whether the global embedding (chunk 0) also queries the index.
    pub include_global: bool,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            top_m: DEFAULT_TOP_M,
            include_global: true,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<(), IndexError> {
        if !(self.threshold > -1.0 && self.threshold <= 1.0) {
            return Err(IndexError::InvalidConfig("threshold must be in (-1, 1]".into()));
        }
        if self.top_m == 0 {
            return Err(IndexError::InvalidConfig("top_m must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub template_id: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateMatch {
    pub document_id: String,
    /// 0 is the global embedding, 1..=K the chunk embeddings.
    pub chunk_index: usize,
    pub template_id: String,
    pub similarity: f64,
}

/// Immutable store of L2-normalized vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    ids: Vec<String>,
    vectors: Vec<f32>,
}

/// Descending similarity, then ascending id.
pub fn rank_order(a_sim: f64, a_id: &str, b_sim: f64, b_id: &str) -> Ordering {
    b_sim.total_cmp(&a_sim).then_with(|| a_id.cmp(b_id))
}

/// `q / ‖q‖` in double precision; `None` for a zero vector.
pub fn normalize(q: &[f64]) -> Option<Vec<f64>> {
    let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    (norm > 0.0 && norm.is_finite()).then(|| q.iter().map(|v| v / norm).collect())
}

impl EmbeddingStore {
    pub fn build<I, S>(dim: usize, embeddings: I) -> Result<Self, IndexError>
    where
        I: IntoIterator<Item = (S, Vec<f32>)>,
        S: Into<String>,
    {
        let mut ids = Vec::new();
        let mut vectors = Vec::new();
        let mut seen = HashSet::new();
        for (id, v) in embeddings {
            let id = id.into();
            if v.len() != dim {
                return Err(IndexError::DimensionMismatch {
                    id,
                    expected: dim,
                    got: v.len(),
                });
            }
            if !seen.insert(id.clone()) {
                return Err(IndexError::DuplicateId(id));
            }
            let wide: Vec<f64> = v.iter().map(|&x| f64::from(x)).collect();
            let Some(unit) = normalize(&wide) else {
                return Err(IndexError::ZeroVector(id));
            };
            vectors.extend(unit.iter().map(|&x| x as f32));
            ids.push(id);
        }
        Ok(Self { dim, ids, vectors })
    }

    pub fn from_file(file: &EmbeddingFile) -> Result<Self, IndexError> {
        Self::build(
            file.dim,
            file.rows().map(|(id, row)| (id.to_string(), row.to_vec())),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    /// Top `cfg.top_m` entries with cosine ≥ `cfg.threshold`.
    pub fn query(&self, q: &[f64], cfg: &MatchConfig) -> Result<Vec<Hit>, IndexError> {
        if q.len() != self.dim {
            return Err(IndexError::DimensionMismatch {
                id: "<query>".into(),
                expected: self.dim,
                got: q.len(),
            });
        }
        let Some(unit) = normalize(q) else {
            return Ok(Vec::new());
        };

        let mut hits: Vec<(f64, usize)> = Vec::new();
        for (block_no, block) in self.vectors.chunks(BLOCK_ROWS * self.dim.max(1)).enumerate() {
            for (j, row) in block.chunks_exact(self.dim).enumerate() {
                let mut dot = 0.0f64;
                for (a, b) in row.iter().zip(&unit) {
                    dot += f64::from(*a) * b;
                }
                if dot >= cfg.threshold {
                    hits.push((dot, block_no * BLOCK_ROWS + j));
                }
            }
        }

        let cmp = |a: &(f64, usize), b: &(f64, usize)| {
            rank_order(a.0, &self.ids[a.1], b.0, &self.ids[b.1])
        };
        if hits.len() > cfg.top_m {
            hits.select_nth_unstable_by(cfg.top_m - 1, cmp);
            hits.truncate(cfg.top_m);
        }
        hits.sort_unstable_by(cmp);
        Ok(hits
            .into_iter()
            .map(|(similarity, i)| Hit {
                template_id: self.ids[i].clone(),
                similarity,
            })
            .collect())
    }

    /// Queries with the global and every chunk embedding and keeps each
    /// template once, at its best-scoring chunk (lowest chunk on ties).
    pub fn match_document(
        &self,
        pooled: &PooledEmbeddingSet,
        document_id: &str,
        cfg: &MatchConfig,
    ) -> Result<Vec<CandidateMatch>, IndexError> {
        let mut best: HashMap<String, (f64, usize)> = HashMap::new();
        for (chunk_index, emb) in pooled.embeddings().enumerate() {
            if chunk_index == 0 && !cfg.include_global {
                continue;
            }
            for hit in self.query(emb, cfg)? {
                best.entry(hit.template_id)
                    .and_modify(|cur| {
                        if hit.similarity > cur.0 {
                            *cur = (hit.similarity, chunk_index);
                        }
                    })
                    .or_insert((hit.similarity, chunk_index));
            }
        }
        let mut out: Vec<CandidateMatch> = best
            .into_iter()
            .map(|(template_id, (similarity, chunk_index))| CandidateMatch {
                document_id: document_id.to_string(),
                chunk_index,
                template_id,
                similarity,
            })
            .collect();
        out.sort_by(|a, b| rank_order(a.similarity, &a.template_id, b.similarity, &b.template_id));
        Ok(out)
    }

    pub fn to_file(&self) -> EmbeddingFile {
        EmbeddingFile {
            dim: self.dim,
            ids: self.ids.clone(),
            data: self.vectors.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        let f = File::create(path).map_err(FormatError::from)?;
        write_embeddings(BufWriter::new(f), &self.to_file(), Some(true))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, IndexError> {
        let f = File::open(path).map_err(FormatError::from)?;
        let (file, flag) = read_embeddings(BufReader::new(f), true)?;
        if flag != Some(true) {
            return Err(IndexError::NotNormalized);
        }
        Ok(Self {
            dim: file.dim,
            ids: file.ids,
            vectors: file.data,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(vectors: &[(&str, Vec<f32>)]) -> EmbeddingStore {
        let dim = vectors[0].1.len();
        EmbeddingStore::build(dim, vectors.iter().map(|(id, v)| (*id, v.clone()))).unwrap()
    }

    #[test]
    fn build_normalizes() {
        let s = store(&[
            ("a", vec![3.0, 4.0, 0.0, 0.0]),
            ("b", vec![0.0, 0.0, 2.0, 0.0]),
            ("c", vec![1.0, 1.0, 1.0, 1.0]),
        ]);
        assert_eq!(s.len(), 3);
        for i in 0..3 {
            let n: f64 = s.vector(i).iter().map(|&x| f64::from(x).powi(2)).sum();
            assert!((n.sqrt() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn build_errors() {
        let dup = EmbeddingStore::build(2, [("a", vec![1.0, 0.0]), ("a", vec![0.0, 1.0])]);
        assert!(matches!(dup, Err(IndexError::DuplicateId(id)) if id == "a"));
        let zero = EmbeddingStore::build(2, [("z", vec![0.0, 0.0])]);
        assert!(matches!(zero, Err(IndexError::ZeroVector(_))));
        let dim = EmbeddingStore::build(2, [("a", vec![1.0])]);
        assert!(matches!(dim, Err(IndexError::DimensionMismatch { .. })));
    }

    #[test]
    fn self_match_ranks_first() {
        let s = store(&[("a", vec![1.0, 0.0]), ("b", vec![0.6, 0.8])]);
        let hits = s.query(&[0.6, 0.8], &MatchConfig::default()).unwrap();
        assert_eq!(hits[0].template_id, "b");
        assert!((hits[0].similarity - 1.0).abs() < 1e-7);
    }

    #[test]
    fn orthogonal_query_is_empty() {
        let s = store(&[("a", vec![1.0, 0.0, 0.0]), ("b", vec![0.0, 1.0, 0.0])]);
        assert!(s.query(&[0.0, 0.0, 1.0], &MatchConfig::default()).unwrap().is_empty());
        assert!(matches!(
            s.query(&[1.0], &MatchConfig::default()),
            Err(IndexError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn ties_break_by_id() {
        let s = store(&[("z", vec![1.0, 0.0]), ("m", vec![1.0, 0.0]), ("a", vec![1.0, 0.0])]);
        let cfg = MatchConfig {
            top_m: 2,
            ..Default::default()
        };
        let ids: Vec<_> = s
            .query(&[1.0, 0.0], &cfg)
            .unwrap()
            .into_iter()
            .map(|h| h.template_id)
            .collect();
        assert_eq!(ids, ["a", "m"]);
    }

    #[test]
    fn dedup_keeps_best_chunk() {
        // Template "t" scores 0.90 against chunk 2 and 0.88 against chunk 4.
        let t = vec![1.0f32, 0.0];
        let s = store(&[("t", t)]);
        let at = |c: f64| vec![c, (1.0 - c * c).sqrt()];
        let far = vec![0.0, 1.0];
        let pooled = PooledEmbeddingSet {
            global: far.clone(),
            chunks: vec![far.clone(), at(0.90), far.clone(), at(0.88), far],
            centers: vec![0.0; 5],
        };
        let m = s.match_document(&pooled, "doc", &MatchConfig::default()).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].chunk_index, 2);
        assert!((m[0].similarity - 0.90).abs() < 1e-6);
    }

    #[test]
    fn global_can_be_excluded() {
        let s = store(&[("t", vec![1.0, 0.0])]);
        let pooled = PooledEmbeddingSet::from_single(vec![1.0, 0.0], 2);
        let with = s.match_document(&pooled, "d", &MatchConfig::default()).unwrap();
        assert_eq!(with[0].chunk_index, 0);
        let cfg = MatchConfig {
            include_global: false,
            ..Default::default()
        };
        let without = s.match_document(&pooled, "d", &cfg).unwrap();
        assert_eq!(without[0].chunk_index, 1);
    }

    #[test]
    fn config_validation() {
        assert!(MatchConfig::default().validate().is_ok());
        for (threshold, top_m) in [(-1.0, 5), (1.5, 5), (0.5, 0)] {
            let cfg = MatchConfig {
                threshold,
                top_m,
                include_global: true,
            };
            assert!(cfg.validate().is_err());
        }
    }
}
