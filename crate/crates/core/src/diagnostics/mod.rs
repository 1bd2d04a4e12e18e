//! Post-hoc analyses over pipeline artifacts: correlation with global
//! alignment, kept-versus-dropped distributions, cheap heuristic baselines,
//! text-only displacement and real-word substitution controls.

mod controls;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use controls::{control_comparison, realword_control, ControlMode, ControlResult, MIN_CONTROL_PAIRS};

use crate::pas::compensated_sum;
use crate::phrase::segment;
use crate::pipeline::{select_phrases, Corpus};
use crate::scoring::{Scorer, ScoringError};

#[derive(Debug, Error)]
pub enum DiagError {
    #[error("inputs differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least two observations, got {0}")]
    TooShort(usize),
    #[error("zero variance in {0}")]
    DegenerateInput(&'static str),
    #[error("empty population: {0}")]
    EmptyPopulation(&'static str),
    #[error("only {found} matched pairs; need {needed}")]
    InsufficientPairs { found: usize, needed: usize },
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Nonce(#[from] crate::nonce::NonceError),
}

fn mean(xs: &[f64]) -> f64 {
    compensated_sum(xs.iter().copied()) / xs.len() as f64
}

/// Product-moment correlation, two-pass with compensated sums.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, DiagError> {
    if xs.len() != ys.len() {
        return Err(DiagError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(DiagError::TooShort(xs.len()));
    }
    let (mx, my) = (mean(xs), mean(ys));
    let sxy = compensated_sum(xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)));
    let sxx = compensated_sum(xs.iter().map(|x| (x - mx) * (x - mx)));
    let syy = compensated_sum(ys.iter().map(|y| (y - my) * (y - my)));
    if sxx == 0.0 {
        return Err(DiagError::DegenerateInput("x"));
    }
    if syy == 0.0 {
        return Err(DiagError::DegenerateInput("y"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based fractional ranks; tied values share the average of their ranks.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation of average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, DiagError> {
    if xs.len() != ys.len() {
        return Err(DiagError::LengthMismatch(xs.len(), ys.len()));
    }
    pearson(&average_ranks(xs), &average_ranks(ys))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub x: String,
    pub y: String,
    pub n: usize,
    pub pearson_r: f64,
    pub spearman_rho: f64,
}

pub fn correlation_report(x: &str, xs: &[f64], y: &str, ys: &[f64]) -> Result<CorrelationReport, DiagError> {
    Ok(CorrelationReport {
        x: x.to_string(),
        y: y.to_string(),
        n: xs.len(),
        pearson_r: pearson(xs, ys)?,
        spearman_rho: spearman(xs, ys)?,
    })
}

/// Fixed-width bins over `[lo, hi]`; the last bin is closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn build(values: &[f64], lo: f64, hi: f64, bins: usize) -> Histogram {
        let mut counts = vec![0u64; bins.max(1)];
        let last = counts.len() as isize - 1;
        let width = (hi - lo) / counts.len() as f64;
        for &v in values {
            let b = if width > 0.0 { ((v - lo) / width).floor() as isize } else { 0 };
            counts[b.clamp(0, last) as usize] += 1;
        }
        Histogram { lo, hi, counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn bin_edges(&self, i: usize) -> (f64, f64) {
        let w = (self.hi - self.lo) / self.counts.len() as f64;
        (self.lo + w * i as f64, self.lo + w * (i + 1) as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationStats {
    pub n: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
}

fn population_stats(xs: &[f64]) -> PopulationStats {
    if xs.is_empty() {
        return PopulationStats { n: 0, mean: None, std: None };
    }
    let m = mean(xs);
    let var = compensated_sum(xs.iter().map(|x| (x - m) * (x - m))) / xs.len() as f64;
    PopulationStats {
        n: xs.len(),
        mean: Some(m),
        std: Some(var.sqrt()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeptDropped {
    pub variable: String,
    pub kept: Histogram,
    pub dropped: Histogram,
    pub kept_stats: PopulationStats,
    pub dropped_stats: PopulationStats,
    /// Sum over bins of the smaller of the two normalized frequencies.
    pub overlap: f64,
}

/// Histogram `values` split by membership of `ids` in `kept`, over a
/// shared range.
pub fn kept_dropped(variable: &str, ids: &[String], values: &[f64], kept: &HashSet<String>, bins: usize) -> Result<KeptDropped, DiagError> {
    if ids.len() != values.len() {
        return Err(DiagError::LengthMismatch(ids.len(), values.len()));
    }
    if values.is_empty() {
        return Err(DiagError::EmptyPopulation("pool"));
    }
    let (mut k, mut d) = (Vec::new(), Vec::new());
    for (id, &v) in ids.iter().zip(values) {
        if kept.contains(id) { k.push(v) } else { d.push(v) }
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let kh = Histogram::build(&k, lo, hi, bins);
    let dh = Histogram::build(&d, lo, hi, bins);
    let overlap = if k.is_empty() || d.is_empty() {
        0.0
    } else {
        kh.counts
            .iter()
            .zip(&dh.counts)
            .map(|(&a, &b)| (a as f64 / k.len() as f64).min(b as f64 / d.len() as f64))
            .sum()
    };
    Ok(KeptDropped {
        variable: variable.to_string(),
        kept_stats: population_stats(&k),
        dropped_stats: population_stats(&d),
        kept: kh,
        dropped: dh,
        overlap,
    })
}

/// Kept-versus-dropped distributions of the normalized score and of the
/// global alignment over a scored pool.
pub fn kept_dropped_histograms(
    ids: &[String],
    scores: &[f64],
    alignments: &[f64],
    kept: &HashSet<String>,
    bins: usize,
) -> Result<[KeptDropped; 2], DiagError> {
    Ok([
        kept_dropped("score", ids, scores, kept, bins)?,
        kept_dropped("alignment", ids, alignments, kept, bins)?,
    ])
}

/// Histogram rows as `bin_lo<TAB>bin_hi<TAB>kept<TAB>dropped`.
pub fn histogram_tsv(kd: &KeptDropped) -> String {
    let mut out = String::from("bin_lo\tbin_hi\tkept\tdropped\n");
    for i in 0..kd.kept.counts.len() {
        let (lo, hi) = kd.kept.bin_edges(i);
        out.push_str(&format!("{lo}\t{hi}\t{}\t{}\n", kd.kept.counts[i], kd.dropped.counts[i]));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeuristicScore {
    pub id: String,
    pub caption_length: usize,
    pub phrase_count: usize,
}

/// Word count of a normalized caption (punctuation runs excluded).
pub fn caption_length(caption: &str) -> usize {
    segment(caption)
        .into_iter()
        .filter(|&(s, e)| caption[s..e].chars().any(char::is_alphanumeric))
        .count()
}

pub fn heuristic_scores(corpus: &Corpus, max_k: usize) -> Vec<HeuristicScore> {
    corpus
        .samples
        .iter()
        .zip(&corpus.captions)
        .map(|(s, c)| HeuristicScore {
            id: s.id.clone(),
            caption_length: caption_length(c),
            phrase_count: select_phrases(s, c, max_k).len(),
        })
        .collect()
}

/// `1 − cos(text(T), text(T̃))` per pair, floored at zero.
pub fn textonly_displacement(scorer: &dyn Scorer, pairs: &[(String, String)]) -> Result<Vec<f64>, DiagError> {
    Ok(scorer
        .text_similarity_pairs(pairs)?
        .into_iter()
        .map(|c| (1.0 - c).max(0.0))
        .collect())
}
