//! Weighted template sampling that steers selected complexities toward a
//! target distribution.
//!
//! Complexities are bucketed as 0..=9 individually plus one `10+` bucket.
//! Each candidate is weighted by `target(bucket) / pool_count(bucket)`, so the
//! probability mass of a bucket in the pool matches the target.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::index::CandidateMatch;
use crate::seed::record_rng;

pub const DEFAULT_PICKS_PER_DOCUMENT: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SamplerError {
    #[error("no templates to estimate a distribution from")]
    EmptyInput,
    #[error("candidate pool is empty")]
    EmptyPool,
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("unknown complexity bucket {0:?}")]
    UnknownBucket(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ComplexityBucket {
    Exact(u8),
    TenPlus,
}

impl ComplexityBucket {
    pub fn of(complexity: usize) -> Self {
        if complexity >= 10 {
            Self::TenPlus
        } else {
            Self::Exact(complexity as u8)
        }
    }
}

impl fmt::Display for ComplexityBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Exact(n) => write!(f, "{n}"),
            Self::TenPlus => f.write_str("10+"),
        }
    }
}

impl FromStr for ComplexityBucket {
    type Err = SamplerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "10+" {
            return Ok(Self::TenPlus);
        }
        match s.parse::<u8>() {
            Ok(n) if n <= 9 => Ok(Self::Exact(n)),
            _ => Err(SamplerError::UnknownBucket(s.to_string())),
        }
    }
}

/// Probability per complexity bucket; sums to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityDistribution {
    probs: BTreeMap<ComplexityBucket, f64>,
}

impl ComplexityDistribution {
    pub fn new(probs: BTreeMap<ComplexityBucket, f64>) -> Result<Self, SamplerError> {
        if probs.values().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(SamplerError::InvalidDistribution(
                "probabilities must be finite and non-negative".into(),
            ));
        }
        let total: f64 = probs.values().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(SamplerError::InvalidDistribution(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self { probs })
    }

    pub fn get(&self, bucket: ComplexityBucket) -> f64 {
        self.probs.get(&bucket).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ComplexityBucket, f64)> + '_ {
        self.probs.iter().map(|(&b, &p)| (b, p))
    }
}

impl Serialize for ComplexityDistribution {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_map(self.probs.iter().map(|(b, p)| (b.to_string(), p)))
    }
}

impl<'de> Deserialize<'de> for ComplexityDistribution {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = BTreeMap::<String, f64>::deserialize(d)?;
        let probs = raw
            .into_iter()
            .map(|(k, v)| Ok((k.parse::<ComplexityBucket>()?, v)))
            .collect::<Result<BTreeMap<_, _>, SamplerError>>()
            .map_err(serde::de::Error::custom)?;
        Self::new(probs).map_err(serde::de::Error::custom)
    }
}

/// Empirical bucket frequencies of a set of complexities.
pub fn estimate_distribution<I>(complexities: I) -> Result<ComplexityDistribution, SamplerError>
where
    I: IntoIterator<Item = usize>,
{
    let mut counts: BTreeMap<ComplexityBucket, usize> = BTreeMap::new();
    let mut total = 0usize;
    for c in complexities {
        *counts.entry(ComplexityBucket::of(c)).or_default() += 1;
        total += 1;
    }
    if total == 0 {
        return Err(SamplerError::EmptyInput);
    }
    let probs = counts
        .into_iter()
        .map(|(b, n)| (b, n as f64 / total as f64))
        .collect();
    ComplexityDistribution::new(probs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingWeights {
    pub weights: Vec<f64>,
    /// The target put no mass on any bucket present in the pool, so the
    /// weights fell back to uniform.
    pub degenerate: bool,
}

/// Per-candidate weights for a pool with the given complexities.
pub fn compute_weights(
    pool_complexities: &[usize],
    target: &ComplexityDistribution,
) -> Result<SamplingWeights, SamplerError> {
    if pool_complexities.is_empty() {
        return Err(SamplerError::EmptyPool);
    }
    let mut pool_counts: BTreeMap<ComplexityBucket, usize> = BTreeMap::new();
    for &c in pool_complexities {
        *pool_counts.entry(ComplexityBucket::of(c)).or_default() += 1;
    }
    let raw: Vec<f64> = pool_complexities
        .iter()
        .map(|&c| {
            let b = ComplexityBucket::of(c);
            target.get(b) / pool_counts[&b] as f64
        })
        .collect();
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        tracing::warn!(
            pool = pool_complexities.len(),
            "target distribution has no mass on pool buckets; using uniform weights"
        );
        let n = pool_complexities.len() as f64;
        return Ok(SamplingWeights {
            weights: vec![1.0 / n; pool_complexities.len()],
            degenerate: true,
        });
    }
    Ok(SamplingWeights {
        weights: raw.into_iter().map(|w| w / total).collect(),
        degenerate: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    /// `None` estimates the target from the template bank.
    pub target: Option<ComplexityDistribution>,
    pub picks_per_document: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            target: None,
            picks_per_document: DEFAULT_PICKS_PER_DOCUMENT,
        }
    }
}

/// Weighted sampling without replacement (Efraimidis–Spirakis keys).
///
/// The pool is sorted by `(template_id, chunk_index)` first, and the RNG is
/// seeded from `(seed, document_id)`, so pool order and scheduling never
/// change the result. Zero-weight candidates are never picked.
pub fn sample(
    pool: &[CandidateMatch],
    weights: &[f64],
    picks: usize,
    seed: u64,
    document_id: &str,
) -> Vec<CandidateMatch> {
    assert_eq!(pool.len(), weights.len(), "weights must align with pool");
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| {
        pool[a]
            .template_id
            .cmp(&pool[b].template_id)
            .then(pool[a].chunk_index.cmp(&pool[b].chunk_index))
    });

    let mut rng = record_rng(seed, &["sample", document_id]);
    let mut keyed: Vec<(f64, usize)> = order
        .into_iter()
        .filter_map(|i| {
            let u: f64 = rng.gen();
            let w = weights[i];
            // ln(u) / w orders the same as u^(1/w) without underflow.
            (w > 0.0).then(|| ((1.0 - u).ln() / w, i))
        })
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut taken = std::collections::HashSet::new();
    keyed
        .into_iter()
        .filter(|&(_, i)| taken.insert(pool[i].template_id.clone()))
        .take(picks)
        .map(|(_, i)| pool[i].clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(id: &str) -> CandidateMatch {
        CandidateMatch {
            document_id: "d".into(),
            chunk_index: 0,
            template_id: id.into(),
            similarity: 0.9,
        }
    }

    fn dist(pairs: &[(ComplexityBucket, f64)]) -> ComplexityDistribution {
        ComplexityDistribution::new(pairs.iter().copied().collect()).unwrap()
    }

    #[test]
    fn bucketing() {
        assert_eq!(ComplexityBucket::of(0), ComplexityBucket::Exact(0));
        assert_eq!(ComplexityBucket::of(9), ComplexityBucket::Exact(9));
        assert_eq!(ComplexityBucket::of(10), ComplexityBucket::TenPlus);
        assert_eq!("10+".parse::<ComplexityBucket>(), Ok(ComplexityBucket::TenPlus));
        assert!("11".parse::<ComplexityBucket>().is_err());
    }

    #[test]
    fn estimate_counts() {
        let d = estimate_distribution([1, 1, 5]).unwrap();
        assert!((d.get(ComplexityBucket::Exact(1)) - 2.0 / 3.0).abs() < 1e-12);
        assert!((d.get(ComplexityBucket::Exact(5)) - 1.0 / 3.0).abs() < 1e-12);

        let d = estimate_distribution([3, 3, 3]).unwrap();
        assert_eq!(d.iter().collect::<Vec<_>>(), [(ComplexityBucket::Exact(3), 1.0)]);

        let d = estimate_distribution([0, 12, 15]).unwrap();
        assert!((d.get(ComplexityBucket::Exact(0)) - 1.0 / 3.0).abs() < 1e-12);
        assert!((d.get(ComplexityBucket::TenPlus) - 2.0 / 3.0).abs() < 1e-12);

        assert_eq!(
            estimate_distribution(std::iter::empty()),
            Err(SamplerError::EmptyInput)
        );
    }

    #[test]
    fn distribution_json() {
        let d: ComplexityDistribution =
            serde_json::from_str(r#"{"1": 0.25, "10+": 0.75}"#).unwrap();
        assert_eq!(d.get(ComplexityBucket::TenPlus), 0.75);
        assert_eq!(serde_json::to_string(&d).unwrap(), r#"{"1":0.25,"10+":0.75}"#);
        assert!(serde_json::from_str::<ComplexityDistribution>(r#"{"1": 0.5}"#).is_err());
        assert!(serde_json::from_str::<ComplexityDistribution>(r#"{"x": 1.0}"#).is_err());
    }

    #[test]
    fn skewed_pool_weight_ratio() {
        let mut pool = vec![1usize; 9];
        pool.push(5);
        let target = dist(&[(ComplexityBucket::Exact(1), 0.5), (ComplexityBucket::Exact(5), 0.5)]);
        let w = compute_weights(&pool, &target).unwrap();
        assert!(!w.degenerate);
        assert!((w.weights[9] / w.weights[0] - 9.0).abs() < 1e-12);
        assert!((w.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matching_target_gives_uniform_weights() {
        let pool = [1, 1, 2, 3];
        let target = estimate_distribution(pool).unwrap();
        let w = compute_weights(&pool, &target).unwrap();
        for x in w.weights {
            assert!((x - 0.25).abs() < 1e-12);
        }
        let single = compute_weights(&[4], &target).unwrap();
        assert_eq!(single.weights, [1.0]);
        assert!(single.degenerate);
    }

    #[test]
    fn absent_buckets_get_zero_weight() {
        let target = dist(&[(ComplexityBucket::Exact(1), 1.0)]);
        let w = compute_weights(&[1, 2], &target).unwrap();
        assert_eq!(w.weights, [1.0, 0.0]);
    }

    #[test]
    fn empty_pool_errors() {
        let target = dist(&[(ComplexityBucket::Exact(1), 1.0)]);
        assert_eq!(compute_weights(&[], &target), Err(SamplerError::EmptyPool));
    }

    #[test]
    fn exhaustion_and_determinism() {
        let pool: Vec<_> = ["a", "b", "c", "d", "e", "f"].map(cand).to_vec();
        let w = vec![1.0 / 6.0; 6];
        let all = sample(&pool, &w, 6, 42, "doc");
        assert_eq!(all.len(), 6);
        assert_eq!(all, sample(&pool, &w, 6, 42, "doc"));
        assert_eq!(sample(&pool, &w, 10, 42, "doc").len(), 6);
    }

    #[test]
    fn zero_weight_is_never_picked() {
        let pool = vec![cand("A"), cand("B")];
        for doc in 0..200 {
            let got = sample(&pool, &[1.0, 0.0], 1, 9, &doc.to_string());
            assert_eq!(got[0].template_id, "A");
        }
    }

    #[test]
    fn permutation_does_not_matter() {
        let pool: Vec<_> = ["q", "w", "e", "r", "t"].map(cand).to_vec();
        let w = [0.1, 0.3, 0.2, 0.25, 0.15];
        let mut rev_pool = pool.clone();
        rev_pool.reverse();
        let mut rev_w = w.to_vec();
        rev_w.reverse();
        for doc in ["x", "y", "z"] {
            assert_eq!(sample(&pool, &w, 3, 1, doc), sample(&rev_pool, &rev_w, 3, 1, doc));
        }
    }

    #[test]
    fn no_duplicate_templates() {
        let mut pool = vec![cand("a"), cand("b")];
        pool.push(CandidateMatch {
            chunk_index: 3,
            ..cand("a")
        });
        let got = sample(&pool, &[1.0, 1.0, 1.0], 3, 5, "doc");
        assert_eq!(got.len(), 2);
        assert_ne!(got[0].template_id, got[1].template_id);
    }
}
