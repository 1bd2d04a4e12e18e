//! Selection manifests and the count rules behind them.

use std::cmp::Ordering;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::pas::PasRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Align,
    Cpi,
    Sweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub stage: Stage,
    pub keep_fraction: f64,
    /// Score of the last kept entry; `None` when nothing is kept.
    pub threshold: Option<f64>,
    pub excluded_invalid: usize,
    pub config_digest: String,
    pub corpus_digest: String,
}

/// Ranked selection: score descending, ties (within [`RANK_RESOLUTION`])
/// by id ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionManifest {
    pub header: ManifestHeader,
    pub entries: Vec<ManifestEntry>,
}

impl SelectionManifest {
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.id.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Stamps provenance digests (selection functions leave them empty).
    pub fn with_provenance(mut self, config_digest: &str, corpus_digest: &str) -> Self {
        self.header.config_digest = config_digest.to_string();
        self.header.corpus_digest = corpus_digest.to_string();
        self
    }
}

/// `ceil(fraction * n)`, treating products within 1e-9 of an integer as
/// that integer so that e.g. `0.7 * 10` keeps 7, not 8.
pub fn keep_count(fraction: f64, n: usize) -> usize {
    let x = fraction * n as f64;
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r as usize
    } else {
        x.ceil() as usize
    }
}

/// Scores closer than this rank as ties. Mathematically equal scores
/// reached through different floating-point paths (e.g. `0.7 - 0.5` and
/// `0.5 - 0.3`) differ in the last bits; without this grid the id
/// tie-break would not apply to them and rankings would change under
/// score-preserving rescalings of the backend.
pub const RANK_RESOLUTION: f64 = 1e-9;

fn rank_key(score: f64) -> f64 {
    (score / RANK_RESOLUTION).round()
}

fn rank_order(a: &ManifestEntry, b: &ManifestEntry) -> Ordering {
    rank_key(b.score).total_cmp(&rank_key(a.score)).then_with(|| a.id.cmp(&b.id))
}

/// Keeps the `count` best entries in rank order.
pub fn top(mut entries: Vec<ManifestEntry>, count: usize) -> Vec<ManifestEntry> {
    let count = count.min(entries.len());
    if count < entries.len() && count > 0 {
        entries.select_nth_unstable_by(count - 1, rank_order);
    }
    entries.truncate(count);
    entries.sort_by(rank_order);
    entries
}

fn manifest(stage: Stage, keep_fraction: f64, entries: Vec<ManifestEntry>, excluded_invalid: usize) -> SelectionManifest {
    SelectionManifest {
        header: ManifestHeader {
            stage,
            keep_fraction,
            threshold: entries.last().map(|e| e.score),
            excluded_invalid,
            config_digest: String::new(),
            corpus_digest: String::new(),
        },
        entries,
    }
}

/// Keeps the `ceil(rho * N)` best-aligned samples. Every sample needs an
/// alignment score.
pub fn stage1_filter(alignments: &[(String, Option<f64>)], rho: f64) -> Result<SelectionManifest, PipelineError> {
    align_manifest(Stage::Align, alignments, rho)
}

fn align_manifest(stage: Stage, alignments: &[(String, Option<f64>)], rho: f64) -> Result<SelectionManifest, PipelineError> {
    let missing: Vec<String> = alignments
        .iter()
        .filter(|(_, a)| a.is_none())
        .map(|(id, _)| id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(PipelineError::MissingAlignment(missing));
    }
    let entries: Vec<ManifestEntry> = alignments
        .iter()
        .map(|(id, a)| ManifestEntry {
            id: id.clone(),
            score: a.expect("checked"),
        })
        .collect();
    let count = keep_count(rho, entries.len());
    Ok(manifest(stage, rho, top(entries, count), 0))
}

/// Excludes invalid records, ranks the rest by score and keeps
/// `ceil(target_fraction * original_n)`.
pub fn stage2_select(records: &[PasRecord], original_n: usize, target_fraction: f64) -> Result<SelectionManifest, PipelineError> {
    let valid: Vec<ManifestEntry> = records
        .iter()
        .filter(|r| r.valid)
        .map(|r| ManifestEntry {
            id: r.sample_id.clone(),
            score: r.score.or(r.mu).expect("valid records carry a mean"),
        })
        .collect();
    let excluded = records.len() - valid.len();
    rank_select(valid, excluded, original_n, target_fraction)
}

/// Stage-2 cut over an arbitrary ranking signal (e.g. a heuristic
/// baseline): keeps `ceil(target_fraction * original_n)` of `entries`.
pub fn rank_select(
    entries: Vec<ManifestEntry>,
    excluded_invalid: usize,
    original_n: usize,
    target_fraction: f64,
) -> Result<SelectionManifest, PipelineError> {
    let target = keep_count(target_fraction, original_n);
    if entries.len() < target {
        return Err(PipelineError::PoolTooSmall {
            valid: entries.len(),
            target,
        });
    }
    Ok(manifest(Stage::Cpi, target_fraction, top(entries, target), excluded_invalid))
}

/// One Stage-1 manifest per retention fraction.
pub fn sweep(alignments: &[(String, Option<f64>)], rhos: &[f64]) -> Result<Vec<SelectionManifest>, PipelineError> {
    rhos.iter().map(|&rho| align_manifest(Stage::Sweep, alignments, rho)).collect()
}

pub fn write_manifest(path: &Path, m: &SelectionManifest) -> Result<(), PipelineError> {
    super::artifacts::write_atomic(path, |w| {
        serde_json::to_writer(&mut *w, &m.header)?;
        w.write_all(b"\n")?;
        for e in &m.entries {
            serde_json::to_writer(&mut *w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    })
}

pub fn read_manifest(path: &Path) -> Result<SelectionManifest, PipelineError> {
    let bad = |reason: String| PipelineError::Artifact {
        path: path.to_path_buf(),
        reason,
    };
    let file = File::open(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut lines = BufReader::new(file).lines();
    let header = lines.next().ok_or_else(|| bad("empty manifest".into()))?.map_err(|e| bad(e.to_string()))?;
    let header: ManifestHeader = serde_json::from_str(&header).map_err(|e| bad(e.to_string()))?;
    let mut entries = Vec::new();
    for line in lines {
        let line = line.map_err(|e| bad(e.to_string()))?;
        entries.push(serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?);
    }
    Ok(SelectionManifest { header, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pas::Aggregator;

    fn aligned(scores: &[f64]) -> Vec<(String, Option<f64>)> {
        scores.iter().enumerate().map(|(i, &s)| (format!("s{i:02}"), Some(s))).collect()
    }

    #[test]
    fn keep_counts() {
        assert_eq!(keep_count(0.7, 10), 7);
        assert_eq!(keep_count(0.5, 2_222_261), 1_111_131);
        assert_eq!(keep_count(0.7, 2_222_261), 1_555_583);
        assert_eq!(keep_count(1.0, 10), 10);
        assert_eq!(keep_count(0.35, 10_000), 3500);
        assert_eq!(keep_count(0.01, 1), 1);
        assert_eq!(keep_count(0.3, 1000), 300);
    }

    #[test]
    fn stage1_counts_and_ties() {
        let a = aligned(&[0.1, 0.9, 0.5, 0.3, 0.7, 0.2, 0.8, 0.4, 0.6, 0.0]);
        let m = stage1_filter(&a, 0.7).unwrap();
        assert_eq!(m.len(), 7);
        assert_eq!(m.entries[0].id, "s01");
        assert_eq!(m.header.threshold, Some(0.3));
        assert_eq!(stage1_filter(&a, 1.0).unwrap().len(), 10);
        let flat = aligned(&[0.5; 10]);
        let m = stage1_filter(&flat, 0.3).unwrap();
        assert_eq!(m.ids().collect::<Vec<_>>(), ["s00", "s01", "s02"]);
    }

    #[test]
    fn last_bit_differences_tie() {
        // 0.7 - 0.5 and 0.5 - 0.3 are both 0.2 but differ in the last bits.
        let (x, y): (f64, f64) = (0.7 - 0.5, 0.5 - 0.3);
        assert_ne!(x, y);
        let m = stage1_filter(&aligned(&[x.min(y), x.max(y), 0.1]), 0.7).unwrap();
        assert_eq!(m.ids().collect::<Vec<_>>(), ["s00", "s01", "s02"]);
        let m = stage1_filter(&aligned(&[0.2, 0.2 + 10.0 * RANK_RESOLUTION]), 0.5).unwrap();
        assert_eq!(m.ids().collect::<Vec<_>>(), ["s01"]);
    }

    #[test]
    fn stage1_missing_alignment_lists_ids() {
        let a = vec![("a".to_string(), Some(0.1)), ("b".to_string(), None), ("c".to_string(), None)];
        match stage1_filter(&a, 0.5) {
            Err(PipelineError::MissingAlignment(ids)) => assert_eq!(ids, ["b", "c"]),
            other => panic!("{other:?}"),
        }
    }

    fn records(mus: &[Option<f64>]) -> Vec<PasRecord> {
        mus.iter()
            .enumerate()
            .map(|(i, mu)| {
                let deltas = mu.map(|m| vec![m]).unwrap_or_default();
                let mut r = PasRecord::new(format!("r{i:02}"), 0.5, deltas, Aggregator::Mean);
                r.score = r.mu;
                r
            })
            .collect()
    }

    #[test]
    fn stage2_counts() {
        let mus: Vec<Option<f64>> = (0..14).map(|i| Some(i as f64)).collect();
        let m = stage2_select(&records(&mus), 20, 0.5).unwrap();
        assert_eq!(m.len(), 10);
        assert!(m.ids().all(|id| id >= "r04"));
        let mut mus: Vec<Option<f64>> = (0..9).map(|i| Some(i as f64)).collect();
        mus.extend([None; 5]);
        assert!(matches!(
            stage2_select(&records(&mus), 20, 0.5),
            Err(PipelineError::PoolTooSmall { valid: 9, target: 10 })
        ));
        let mut mus: Vec<Option<f64>> = (0..12).map(|i| Some(i as f64)).collect();
        mus.extend([None, None]);
        assert_eq!(stage2_select(&records(&mus), 20, 0.5).unwrap().header.excluded_invalid, 2);
    }

    #[test]
    fn sweep_is_nested() {
        let a = aligned(&[0.1, 0.9, 0.5, 0.3, 0.7, 0.2, 0.8, 0.4, 0.6, 0.0]);
        let ms = sweep(&a, &[1.0, 0.5]).unwrap();
        assert_eq!(ms.iter().map(|m| m.len()).collect::<Vec<_>>(), [10, 5]);
        assert!(ms[1].ids().all(|id| ms[0].ids().any(|x| x == id)));
        assert!(sweep(&a, &[]).unwrap().is_empty());
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        let m = stage1_filter(&aligned(&[0.25, 0.75]), 1.0).unwrap().with_provenance("c", "d");
        write_manifest(&p, &m).unwrap();
        assert_eq!(read_manifest(&p).unwrap(), m);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with(r#"{"stage":"align","keep_fraction":1.0,"threshold":0.25,"excluded_invalid":0,"config_digest":"c","corpus_digest":"d"}"#));
        assert!(text.contains("\n{\"id\":\"s01\",\"score\":0.75}\n"));
    }
}
