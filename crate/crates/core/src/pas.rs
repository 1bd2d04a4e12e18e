//! Phrase attribution scores and their sample-level aggregation.
//!
//! `Δ = s(I,T) − s(I,T̃)` per valid intervention, `μ` is the mean of a
//! sample's deltas, and the final score is the z-score of `μ` over the pool
//! of valid samples (population standard deviation).

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PasError {
    #[error("degenerate pool: {size} valid samples, std {std}")]
    DegeneratePool { size: usize, std: f64 },
}

/// Similarity drop under one intervention. Not clamped: negative drops are kept.
pub fn pas(s_orig: f64, s_pert: f64) -> f64 {
    s_orig - s_pert
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for x in values {
        let t = sum + x;
        c += if sum.abs() >= x.abs() { (sum - t) + x } else { (x - t) + sum };
        sum = t;
    }
    sum + c
}

/// Mean of `deltas`; `None` marks an invalid sample.
///
/// Summed as offsets from the minimum in sorted order, so the result does
/// not depend on phrase order and equal drops average to themselves
/// exactly. Samples whose drops agree therefore tie exactly and fall to
/// the id tie-break instead of an arbitrary last-bit difference.
pub fn aggregate_mean(deltas: &[f64]) -> Option<f64> {
    let mut sorted = deltas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pivot = *sorted.first()?;
    Some(pivot + compensated_sum(sorted.iter().map(|d| d - pivot)) / sorted.len() as f64)
}

/// Maximum of `deltas`; `None` marks an invalid sample.
pub fn aggregate_max(deltas: &[f64]) -> Option<f64> {
    deltas.iter().copied().reduce(f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregator {
    #[default]
    Mean,
    Max,
}

impl Aggregator {
    pub fn apply(self, deltas: &[f64]) -> Option<f64> {
        match self {
            Aggregator::Mean => aggregate_mean(deltas),
            Aggregator::Max => aggregate_max(deltas),
        }
    }
}

/// Streaming count/mean/M2 (Welford), mergeable across shards (Chan et al.).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(self, other: Moments) -> Moments {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        let mean = self.mean + d * other.n as f64 / n as f64;
        let m2 = self.m2 + other.m2 + d * d * (self.n as f64 * other.n as f64 / n as f64);
        Moments { n, mean, m2 }
    }

    pub fn population_std(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.m2.max(0.0) / self.n as f64).sqrt()
        }
    }
}

/// Leaf size of the pairwise reduction; fixes the merge tree for any input.
const LEAF: usize = 1024;

fn pairwise(values: &[f64]) -> Moments {
    if values.len() <= LEAF {
        let mut m = Moments::default();
        values.iter().for_each(|&x| m.push(x));
        return m;
    }
    let mid = values.len() / 2;
    pairwise(&values[..mid]).merge(pairwise(&values[mid..]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolStats {
    pub mean: f64,
    pub std: f64,
    pub pool_size: usize,
}

impl PoolStats {
    /// Mean and population std of the valid `μ` values, in one pass over a
    /// fixed pairwise merge tree.
    pub fn compute(mus: &[f64]) -> Result<PoolStats, PasError> {
        let m = pairwise(mus);
        let std = m.population_std();
        if mus.len() < 2 || std == 0.0 || !std.is_finite() {
            return Err(PasError::DegeneratePool { size: mus.len(), std });
        }
        Ok(PoolStats {
            mean: m.mean,
            std,
            pool_size: mus.len(),
        })
    }
}

/// `(μ − μ̄) / σ`.
pub fn normalize(mu: f64, stats: &PoolStats) -> f64 {
    (mu - stats.mean) / stats.std
}

/// One sample's scores, as written to `scores.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PasRecord {
    pub sample_id: String,
    pub base_score: f64,
    pub deltas: Vec<f64>,
    pub k: usize,
    pub mu: Option<f64>,
    pub score: Option<f64>,
    pub valid: bool,
}

impl PasRecord {
    pub fn new(sample_id: String, base_score: f64, deltas: Vec<f64>, aggregator: Aggregator) -> Self {
        let mu = aggregator.apply(&deltas);
        Self {
            sample_id,
            base_score,
            k: deltas.len(),
            deltas,
            mu,
            score: None,
            valid: mu.is_some(),
        }
    }
}

/// Fills `score` on every valid record; returns the pool statistics used.
pub fn normalize_records(records: &mut [PasRecord]) -> Result<PoolStats, PasError> {
    let mus: Vec<f64> = records.iter().filter_map(|r| r.mu).collect();
    let stats = PoolStats::compute(&mus)?;
    for r in records.iter_mut() {
        r.score = r.mu.map(|mu| normalize(mu, &stats));
    }
    Ok(stats)
}
