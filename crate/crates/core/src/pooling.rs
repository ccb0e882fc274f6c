//! Global mean pooling plus K Gaussian-weighted chunk-local embeddings.
//!
//! Positions are 1-based. `T` is the effective sequence length: the position
//! of the last attended token, so trailing padding never shifts the kernel
//! centers. Masked positions inside the sequence keep their position but
//! carry zero weight. All accumulation is in `f64`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PoolingError {
    #[error("attention mask selects no tokens")]
    AllMasked,
    #[error("no attended token has kernel value above the hard-mask threshold")]
    EmptyHardMask,
    #[error("chunk index {k} outside 1..={chunks}")]
    ChunkOutOfRange { k: usize, chunks: usize },
    #[error("token matrix shape mismatch: {0}")]
    Shape(String),
    #[error("invalid pooling config: {0}")]
    InvalidConfig(String),
}

/// `T × d` token embeddings with a `{0,1}` attention mask.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMatrix {
    data: Vec<f64>,
    mask: Vec<bool>,
    dim: usize,
}

impl TokenMatrix {
    pub fn new(data: Vec<f64>, mask: Vec<bool>, dim: usize) -> Result<Self, PoolingError> {
        if dim == 0 {
            return Err(PoolingError::Shape("dimension must be positive".into()));
        }
        if data.len() != mask.len() * dim {
            return Err(PoolingError::Shape(format!(
                "{} values for {} tokens of dimension {dim}",
                data.len(),
                mask.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(PoolingError::Shape("non-finite entry".into()));
        }
        Ok(Self { data, mask, dim })
    }

    /// Fully attended matrix from rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, PoolingError> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(PoolingError::Shape("ragged rows".into()));
        }
        Self::new(rows.concat(), vec![true; rows.len()], dim)
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self, PoolingError> {
        if mask.len() != self.mask.len() {
            return Err(PoolingError::Shape("mask length differs".into()));
        }
        self.mask = mask;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    /// Position of the last attended token (1-based), or `None` if all masked.
    pub fn effective_len(&self) -> Option<usize> {
        self.mask.iter().rposition(|&m| m).map(|i| i + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoolingConfig {
    pub chunks: usize,
    pub sigma: f64,
    pub alpha: f64,
    /// Raw kernel value a token needs to enter a hard chunk mask.
    pub hard_threshold: f64,
}

impl Default for PoolingConfig {
    fn default() -> Self {
        Self {
            chunks: 5,
            sigma: 0.05,
            alpha: 1.0,
            hard_threshold: 0.5,
        }
    }
}

impl PoolingConfig {
    pub fn validate(&self) -> Result<(), PoolingError> {
        if self.chunks == 0 {
            return Err(PoolingError::InvalidConfig("chunks must be >= 1".into()));
        }
        if self.sigma <= 0.0 || !self.sigma.is_finite() {
            return Err(PoolingError::InvalidConfig("sigma must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(PoolingError::InvalidConfig("alpha must be in [0, 1]".into()));
        }
        if !(self.hard_threshold > 0.0 && self.hard_threshold <= 1.0) {
            return Err(PoolingError::InvalidConfig(
                "hard_threshold must be in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// Kernel center `c_k = k / (K + 1) · T`.
    pub fn center(&self, k: usize, effective_len: usize) -> f64 {
        k as f64 / (self.chunks + 1) as f64 * effective_len as f64
    }

    fn check_chunk(&self, k: usize) -> Result<(), PoolingError> {
        if k == 0 || k > self.chunks {
            return Err(PoolingError::ChunkOutOfRange {
                k,
                chunks: self.chunks,
            });
        }
        Ok(())
    }
}

/// The global embedding followed by K chunk embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledEmbeddingSet {
    pub global: Vec<f64>,
    pub chunks: Vec<Vec<f64>>,
    pub centers: Vec<f64>,
}

impl PooledEmbeddingSet {
    pub fn dim(&self) -> usize {
        self.global.len()
    }

    /// `[global, chunk_1, ..., chunk_K]`; index 0 is the global embedding.
    pub fn embeddings(&self) -> impl Iterator<Item = &[f64]> {
        std::iter::once(self.global.as_slice()).chain(self.chunks.iter().map(Vec::as_slice))
    }

    pub fn len(&self) -> usize {
        self.chunks.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// A single vector repeated as every chunk, for embedders without
    /// token-level output.
    pub fn from_single(vector: Vec<f64>, chunks: usize) -> Self {
        Self {
            chunks: vec![vector.clone(); chunks],
            centers: vec![0.0; chunks],
            global: vector,
        }
    }
}

pub fn global_mean(tm: &TokenMatrix) -> Result<Vec<f64>, PoolingError> {
    let mut sum = vec![0.0; tm.dim];
    let mut count = 0usize;
    for (t, &m) in tm.mask.iter().enumerate() {
        if m {
            count += 1;
            for (s, v) in sum.iter_mut().zip(tm.row(t)) {
                *s += v;
            }
        }
    }
    if count == 0 {
        return Err(PoolingError::AllMasked);
    }
    let n = count as f64;
    sum.iter_mut().for_each(|s| *s /= n);
    Ok(sum)
}

fn kernel_exponent(position: usize, center: f64, width: f64) -> f64 {
    let z = (position as f64 - center) / width;
    -0.5 * z * z
}

/// Normalized Gaussian weights `w_{k,t}` over the full sequence (padding gets 0).
pub fn gaussian_weights(
    tm: &TokenMatrix,
    cfg: &PoolingConfig,
    k: usize,
) -> Result<Vec<f64>, PoolingError> {
    cfg.check_chunk(k)?;
    let t_eff = tm.effective_len().ok_or(PoolingError::AllMasked)?;
    let center = cfg.center(k, t_eff);
    let width = cfg.sigma * t_eff as f64;

    // Shift by the largest exponent so the nearest attended token never underflows.
    let exps: Vec<Option<f64>> = tm
        .mask
        .iter()
        .enumerate()
        .map(|(i, &m)| m.then(|| kernel_exponent(i + 1, center, width)))
        .collect();
    let max = exps
        .iter()
        .flatten()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = exps
        .iter()
        .map(|e| e.map_or(0.0, |e| (e - max).exp()))
        .collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(weights)
}

pub fn pool(tm: &TokenMatrix, cfg: &PoolingConfig) -> Result<PooledEmbeddingSet, PoolingError> {
    cfg.validate()?;
    let global = global_mean(tm)?;
    let t_eff = tm.effective_len().ok_or(PoolingError::AllMasked)?;
    let mut chunks = Vec::with_capacity(cfg.chunks);
    let mut centers = Vec::with_capacity(cfg.chunks);
    for k in 1..=cfg.chunks {
        // Accumulated as offsets from the global mean, so constant inputs and
        // uniform weights reproduce it exactly.
        let weights = gaussian_weights(tm, cfg, k)?;
        let mut offset = vec![0.0; tm.dim];
        for (t, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for ((acc, v), g) in offset.iter_mut().zip(tm.row(t)).zip(&global) {
                *acc += w * (v - g);
            }
        }
        let local: Vec<f64> = global.iter().zip(&offset).map(|(g, o)| g + o).collect();
        let blended = if cfg.alpha == 1.0 {
            local
        } else if cfg.alpha == 0.0 {
            global.clone()
        } else {
            global
                .iter()
                .zip(&local)
                .map(|(g, l)| g + cfg.alpha * (l - g))
                .collect()
        };
        chunks.push(blended);
        centers.push(cfg.center(k, t_eff));
    }
    Ok(PooledEmbeddingSet {
        global,
        chunks,
        centers,
    })
}

/// Hard attention mask for chunk `k`: attended tokens whose raw kernel value
/// `exp(-½((t - c_k)/(σT))²)` reaches the configured threshold.
pub fn hard_chunk_mask(
    tm: &TokenMatrix,
    cfg: &PoolingConfig,
    k: usize,
) -> Result<Vec<bool>, PoolingError> {
    cfg.check_chunk(k)?;
    let t_eff = tm.effective_len().ok_or(PoolingError::AllMasked)?;
    let center = cfg.center(k, t_eff);
    let width = cfg.sigma * t_eff as f64;
    let log_threshold = cfg.hard_threshold.ln();
    let mask: Vec<bool> = tm
        .mask
        .iter()
        .enumerate()
        .map(|(i, &m)| m && kernel_exponent(i + 1, center, width) >= log_threshold)
        .collect();
    if mask.iter().any(|&m| m) {
        Ok(mask)
    } else {
        Err(PoolingError::EmptyHardMask)
    }
}

/// Like [`hard_chunk_mask`], but an empty window falls back to the attended
/// token nearest the center (ties go to the earlier token).
pub fn hard_chunk_mask_or_nearest(
    tm: &TokenMatrix,
    cfg: &PoolingConfig,
    k: usize,
) -> Result<Vec<bool>, PoolingError> {
    match hard_chunk_mask(tm, cfg, k) {
        Err(PoolingError::EmptyHardMask) => {
            let t_eff = tm.effective_len().ok_or(PoolingError::AllMasked)?;
            let center = cfg.center(k, t_eff);
            let nearest = tm
                .mask
                .iter()
                .enumerate()
                .filter(|(_, &m)| m)
                .map(|(i, _)| i)
                .min_by(|&a, &b| {
                    let da = ((a + 1) as f64 - center).abs();
                    let db = ((b + 1) as f64 - center).abs();
                    da.total_cmp(&db)
                })
                .ok_or(PoolingError::AllMasked)?;
            let mut mask = vec![false; tm.len()];
            mask[nearest] = true;
            Ok(mask)
        }
        other => other,
    }
}

/// Half-width of the hard window in token positions: `σT·√(2 ln(1/threshold))`.
pub fn hard_window_radius(cfg: &PoolingConfig, effective_len: usize) -> f64 {
    cfg.sigma * effective_len as f64 * (-2.0 * cfg.hard_threshold.ln()).sqrt()
}
