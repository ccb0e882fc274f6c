//! Diversity statistics over a generated dataset.
//!
//! Accumulators are single-pass and mergeable so shards can be combined.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalyticsError {
    #[error("no records")]
    EmptyInput,
    #[error("power-law fit needs positive x and y, got ({x}, {y})")]
    NonPositivePoint { x: String, y: String },
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("a variable has zero variance")]
    ZeroVariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageConcentration {
    pub total_instructions: usize,
    pub unique_templates: usize,
    pub max_share: f64,
    pub most_used_template: String,
    /// Uses per template id; sums to `total_instructions`.
    pub per_template: BTreeMap<String, usize>,
}

impl UsageConcentration {
    /// Number of templates used exactly `n` times, keyed by `n`.
    pub fn use_histogram(&self) -> BTreeMap<usize, usize> {
        let mut h = BTreeMap::new();
        for &n in self.per_template.values() {
            *h.entry(n).or_default() += 1;
        }
        h
    }
}

#[derive(Debug, Clone, Default)]
pub struct UsageAccumulator {
    counts: HashMap<String, usize>,
    total: usize,
}

impl UsageAccumulator {
    pub fn add(&mut self, template_id: &str) {
        *self.counts.entry(template_id.to_string()).or_default() += 1;
        self.total += 1;
    }

    pub fn merge(&mut self, other: UsageAccumulator) {
        for (id, n) in other.counts {
            *self.counts.entry(id).or_default() += n;
        }
        self.total += other.total;
    }

    pub fn finish(self) -> Result<UsageConcentration, AnalyticsError> {
        if self.total == 0 {
            return Err(AnalyticsError::EmptyInput);
        }
        let per_template: BTreeMap<String, usize> = self.counts.into_iter().collect();
        // BTreeMap order makes the lowest id win ties.
        let (top_id, top_n) = per_template
            .iter()
            .fold(None::<(&String, usize)>, |best, (id, &n)| match best {
                Some((_, bn)) if bn >= n => best,
                _ => Some((id, n)),
            })
            .expect("non-empty");
        Ok(UsageConcentration {
            total_instructions: self.total,
            unique_templates: per_template.len(),
            max_share: top_n as f64 / self.total as f64,
            most_used_template: top_id.clone(),
            per_template,
        })
    }
}

pub fn usage_stats<'a, I>(template_ids: I) -> Result<UsageConcentration, AnalyticsError>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut acc = UsageAccumulator::default();
    for id in template_ids {
        acc.add(id);
    }
    acc.finish()
}

/// `y = a · x^b`, fit by least squares on `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub a: f64,
    pub b: f64,
    /// Coefficient of determination in log-log space.
    pub r2: f64,
}

impl PowerFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.a * x.powf(self.b)
    }
}

pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerFit, AnalyticsError> {
    if points.len() < 2 {
        return Err(AnalyticsError::TooFewPoints {
            needed: 2,
            got: points.len(),
        });
    }
    if let Some(&(x, y)) = points.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0)) {
        return Err(AnalyticsError::NonPositivePoint {
            x: x.to_string(),
            y: y.to_string(),
        });
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(lx, ly) in &logs {
        let (dx, dy) = (lx - mx, ly - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(AnalyticsError::ZeroVariance);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = logs
        .iter()
        .map(|&(lx, ly)| {
            let e = ly - (intercept + slope * lx);
            e * e
        })
        .sum();
    let r2 = if syy == 0.0 {
        if ss_res == 0.0 {
            1.0
        } else {
            f64::NEG_INFINITY
        }
    } else {
        1.0 - ss_res / syy
    };
    Ok(PowerFit {
        a: intercept.exp(),
        b: slope,
        r2,
    })
}

/// Cumulative `(documents processed, unique templates used)` after each
/// document, given records grouped by document in processing order.
pub fn template_growth<'a, I>(records: I) -> Vec<(f64, f64)>
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    let mut seen = HashSet::new();
    let mut points = Vec::new();
    let mut docs = 0usize;
    let mut current: Option<&str> = None;
    for (doc, template) in records {
        if current != Some(doc) {
            if current.is_some() {
                points.push((docs as f64, seen.len() as f64));
            }
            docs += 1;
            current = Some(doc);
        }
        seen.insert(template);
    }
    if current.is_some() {
        points.push((docs as f64, seen.len() as f64));
    }
    points
}

/// Streaming Pearson correlation (Welford updates, Chan merge).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PearsonAccumulator {
    n: u64,
    mean_x: f64,
    mean_y: f64,
    m2_x: f64,
    m2_y: f64,
    c_xy: f64,
}

impl PearsonAccumulator {
    pub fn add(&mut self, x: f64, y: f64) {
        self.n += 1;
        let n = self.n as f64;
        let dx = x - self.mean_x;
        self.mean_x += dx / n;
        let dy = y - self.mean_y;
        self.mean_y += dy / n;
        self.m2_x += dx * (x - self.mean_x);
        self.m2_y += dy * (y - self.mean_y);
        self.c_xy += dx * (y - self.mean_y);
    }

    pub fn merge(&mut self, other: &PearsonAccumulator) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        let dx = other.mean_x - self.mean_x;
        let dy = other.mean_y - self.mean_y;
        self.m2_x += other.m2_x + dx * dx * na * nb / n;
        self.m2_y += other.m2_y + dy * dy * na * nb / n;
        self.c_xy += other.c_xy + dx * dy * na * nb / n;
        self.mean_x += dx * nb / n;
        self.mean_y += dy * nb / n;
        self.n += other.n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn pearson(&self) -> Result<f64, AnalyticsError> {
        if self.n < 2 {
            return Err(AnalyticsError::TooFewPoints {
                needed: 2,
                got: self.n as usize,
            });
        }
        if self.m2_x <= 0.0 || self.m2_y <= 0.0 {
            return Err(AnalyticsError::ZeroVariance);
        }
        Ok((self.c_xy / (self.m2_x.sqrt() * self.m2_y.sqrt())).clamp(-1.0, 1.0))
    }
}

pub fn pearson(pairs: &[(f64, f64)]) -> Result<f64, AnalyticsError> {
    let mut acc = PearsonAccumulator::default();
    for &(x, y) in pairs {
        acc.add(x, y);
    }
    acc.pearson()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkPositionStats {
    pub pearson_r: f64,
    pub records: usize,
    /// Mean relative excerpt position per chunk index.
    pub per_chunk_mean: BTreeMap<usize, f64>,
    pub per_chunk_count: BTreeMap<usize, usize>,
    /// 10th and 90th percentile of relative positions.
    pub position_band: (f64, f64),
}

/// Correlation between retrieving chunk index `k` and relative excerpt position `p`.
pub fn chunk_position_correlation<I>(records: I) -> Result<ChunkPositionStats, AnalyticsError>
where
    I: IntoIterator<Item = (usize, f64)>,
{
    let mut acc = PearsonAccumulator::default();
    let mut sums: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
    let mut positions = Vec::new();
    for (k, p) in records {
        acc.add(k as f64, p);
        let e = sums.entry(k).or_default();
        e.0 += 1;
        e.1 += p;
        positions.push(p);
    }
    let pearson_r = acc.pearson()?;
    positions.sort_by(f64::total_cmp);
    let quantile = |q: f64| {
        let idx = ((positions.len() - 1) as f64 * q).round() as usize;
        positions[idx]
    };
    Ok(ChunkPositionStats {
        pearson_r,
        records: positions.len(),
        per_chunk_mean: sums.iter().map(|(&k, &(n, s))| (k, s / n as f64)).collect(),
        per_chunk_count: sums.iter().map(|(&k, &(n, _))| (k, n)).collect(),
        position_band: (quantile(0.1), quantile(0.9)),
    })
}
