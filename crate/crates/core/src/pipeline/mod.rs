//! Two-stage curation: alignment filtering, then phrase-sensitivity ranking.
//!
//! Stages run as barriers in a fixed order (`align`, `extract`, `forge`,
//! `score`, `select`). Each writes its artifacts under the output directory
//! and then a completion marker; a re-run resumes after the last stage
//! whose marker still matches the configuration, corpus and backend. Work
//! inside a stage is sharded over the current rayon pool and merged back in
//! corpus order, so outputs do not depend on the worker count.

pub mod artifacts;
mod corpus;
mod manifest;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use corpus::{read_corpus, Corpus, Sample, SpanAnnotation, MAX_LINE_BYTES};
pub use manifest::{
    keep_count, rank_select, read_manifest, RANK_RESOLUTION, stage1_filter, stage2_select, sweep, top, write_manifest, ManifestEntry, ManifestHeader,
    SelectionManifest, Stage,
};

use crate::bpe::Vocab;
use crate::lexicon::ExclusionLexicon;
use crate::nonce::{Intervention, NonceError, NonceForge};
use crate::pas::{normalize_records, pas, Aggregator, PasError, PasRecord, PoolStats};
use crate::phrase::{extract_candidates, select_nonoverlapping, tag, PhraseSpan, DEFAULT_MAX_K};
use crate::scoring::{Scorer, ScoringError};
use artifacts::{outputs_intact, read_jsonl, read_marker, read_markers, remove_marker, sha256_file, write_json, write_jsonl, write_marker, StageMarker};

pub const ALIGNMENT_FILE: &str = "alignment.jsonl";
pub const ALIGN_MANIFEST_FILE: &str = "align_manifest.jsonl";
pub const PHRASES_FILE: &str = "phrases.jsonl";
pub const INTERVENTIONS_FILE: &str = "interventions.jsonl";
pub const SCORES_FILE: &str = "scores.jsonl";
pub const CPI_MANIFEST_FILE: &str = "cpi_manifest.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
/// Stage-1 retention fractions swept when none are given.
pub const DEFAULT_RHO_GRID: [f64; 6] = [1.0, 0.9, 0.8, 0.7, 0.6, 0.5];

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corpus line {line}: {reason}")]
    Corpus { line: usize, reason: String },
    #[error("{path}: {reason}")]
    Artifact { path: PathBuf, reason: String },
    #[error("missing alignment for {} samples: {}", .0.len(), .0.join(", "))]
    MissingAlignment(Vec<String>),
    #[error("valid pool of {valid} is smaller than the target of {target}")]
    PoolTooSmall { valid: usize, target: usize },
    #[error("output directory holds stages scored by {found:?}; this run uses {expected:?}")]
    BackendMismatch { expected: String, found: String },
    #[error(transparent)]
    Pas(#[from] PasError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Nonce(#[from] NonceError),
    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<PipelineError>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Backend,
}

impl PipelineError {
    pub fn class(&self) -> ErrorClass {
        match self {
            PipelineError::Stage { source, .. } => source.class(),
            PipelineError::BackendMismatch { .. } => ErrorClass::Config,
            PipelineError::Scoring(_) => ErrorClass::Backend,
            _ => ErrorClass::Data,
        }
    }

    /// The innermost error, past stage labels.
    pub fn root(&self) -> &PipelineError {
        match self {
            PipelineError::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ PipelineError::Stage { .. } => e,
            e => PipelineError::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub rho: f64,
    pub target_fraction: f64,
    pub max_k: usize,
    pub seed_salt: String,
    pub aggregator: Aggregator,
    /// Samples per scoring request; does not affect results.
    #[serde(skip)]
    pub batch_size: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            rho: 0.7,
            target_fraction: 0.5,
            max_k: DEFAULT_MAX_K,
            seed_salt: String::new(),
            aggregator: Aggregator::Mean,
            batch_size: 64,
        }
    }
}

impl PipelineConfig {
    /// SHA-256 over every setting that can change an output. Worker count,
    /// batch size and paths are deliberately left out.
    pub fn digest(&self, backend_id: &str) -> String {
        let canonical = serde_json::json!({
            "aggregator": self.aggregator,
            "backend": backend_id,
            "max_k": self.max_k,
            "rho": self.rho,
            "seed_salt": self.seed_salt,
            "target_fraction": self.target_fraction,
        });
        hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlignmentSource {
    Corpus,
    Backend,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentRecord {
    pub id: String,
    pub alignment: f64,
    pub source: AlignmentSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhraseRecord {
    pub id: String,
    pub spans: Vec<PhraseSpan>,
    pub heads: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
pub struct Progress {
    pub stage: &'static str,
    pub processed: usize,
    pub total: usize,
    pub elapsed: Duration,
    pub resumed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum StopAfter {
    Align,
    Extract,
    Forge,
    Score,
    Select,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub tool_version: String,
    pub backend: String,
    pub config_digest: String,
    pub corpus_digest: String,
    pub original_n: usize,
    pub rho: f64,
    pub target_fraction: f64,
    pub stage1_pool: usize,
    pub valid: usize,
    pub excluded_invalid: usize,
    pub exclusion_rate: f64,
    pub coverage: f64,
    pub interventions: usize,
    pub valid_interventions: usize,
    pub invalid_reasons: BTreeMap<String, usize>,
    pub pool_mean: f64,
    pub pool_std: f64,
    pub kept: usize,
    pub dropped_valid: usize,
    pub dropped_share_of_valid: f64,
}

/// Everything a run produced up to its last stage.
#[derive(Debug, Clone, Default)]
pub struct RunOutcome {
    pub alignments: Vec<AlignmentRecord>,
    pub align: Option<SelectionManifest>,
    pub phrases: Vec<PhraseRecord>,
    pub interventions: Vec<Intervention>,
    pub records: Vec<PasRecord>,
    pub pool_stats: Option<PoolStats>,
    pub cpi: Option<SelectionManifest>,
    pub summary: Option<RunSummary>,
}

type ProgressFn<'a> = dyn Fn(&Progress) + Sync + 'a;

/// Selected spans of one normalized caption: pre-annotated spans when
/// given (non-content heads dropped), rule-based extraction otherwise.
pub fn select_phrases(sample: &Sample, caption: &str, max_k: usize) -> Vec<PhraseSpan> {
    let tokens = tag(caption);
    let candidates = match &sample.spans {
        Some(annotations) => annotations
            .iter()
            .filter(|a| tokens.get(a.head_word).is_some_and(|t| t.tag.is_content_head()))
            .map(|a| PhraseSpan {
                first: a.start_word,
                last: a.end_word,
                kind: a.kind,
                head: a.head_word,
            })
            .collect(),
        None => extract_candidates(&tokens),
    };
    select_nonoverlapping(&candidates, max_k)
}

pub struct Pipeline<'a> {
    config: PipelineConfig,
    scorer: &'a dyn Scorer,
    vocab: &'a Vocab,
    exclusion: &'a ExclusionLexicon,
    out_dir: PathBuf,
    progress: Option<&'a ProgressFn<'a>>,
}

struct RunCtx<'c> {
    corpus: &'c Corpus,
    config_digest: String,
    backend: String,
    started: Instant,
    /// Set once any stage is recomputed; every later stage then recomputes.
    dirty: bool,
}

impl<'a> Pipeline<'a> {
    pub fn new(config: PipelineConfig, scorer: &'a dyn Scorer, vocab: &'a Vocab, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            config,
            scorer,
            vocab,
            exclusion: ExclusionLexicon::bundled(),
            out_dir: out_dir.into(),
            progress: None,
        }
    }

    pub fn with_progress(mut self, progress: &'a ProgressFn<'a>) -> Self {
        self.progress = Some(progress);
        self
    }

    pub fn with_exclusion(mut self, exclusion: &'a ExclusionLexicon) -> Self {
        self.exclusion = exclusion;
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn out_dir(&self) -> &Path {
        &self.out_dir
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn report(&self, ctx: &RunCtx, stage: &'static str, processed: usize, total: usize, resumed: bool) {
        if let Some(p) = self.progress {
            p(&Progress {
                stage,
                processed,
                total,
                elapsed: ctx.started.elapsed(),
                resumed,
            });
        }
    }

    fn prepare(&self) -> Result<(String, String), PipelineError> {
        std::fs::create_dir_all(&self.out_dir).map_err(|source| PipelineError::Io {
            path: self.out_dir.clone(),
            source,
        })?;
        let backend = self.scorer.backend_id();
        if let Some(m) = read_markers(&self.out_dir).into_iter().find(|m| m.backend != backend) {
            return Err(PipelineError::BackendMismatch {
                expected: backend,
                found: m.backend,
            });
        }
        Ok((self.config.digest(&backend), backend))
    }

    /// Loads a stage from its artifacts when its marker is current,
    /// otherwise computes it and writes a fresh marker.
    fn stage<T>(
        &self,
        ctx: &mut RunCtx,
        name: &'static str,
        outputs: &[&str],
        load: impl FnOnce() -> Result<T, PipelineError>,
        compute: impl FnOnce(&RunCtx) -> Result<T, PipelineError>,
    ) -> Result<T, PipelineError> {
        if !ctx.dirty {
            let current = read_marker(&self.out_dir, name).filter(|m| {
                m.config_digest == ctx.config_digest
                    && m.corpus_digest == ctx.corpus.digest
                    && m.backend == ctx.backend
                    && outputs_intact(&self.out_dir, m)
            });
            if current.is_some() {
                if let Ok(value) = load() {
                    self.report(ctx, name, 1, 1, true);
                    return Ok(value);
                }
            }
        }
        ctx.dirty = true;
        remove_marker(&self.out_dir, name).map_err(|e| e.in_stage(name))?;
        let value = compute(ctx).map_err(|e| e.in_stage(name))?;
        let mut digests = BTreeMap::new();
        for out in outputs {
            digests.insert(out.to_string(), sha256_file(&self.path(out)).map_err(|e| e.in_stage(name))?);
        }
        let marker = StageMarker {
            stage: name.to_string(),
            config_digest: ctx.config_digest.clone(),
            corpus_digest: ctx.corpus.digest.clone(),
            backend: ctx.backend.clone(),
            outputs: digests,
        };
        write_marker(&self.out_dir, &marker).map_err(|e| e.in_stage(name))?;
        Ok(value)
    }

    /// Runs every stage up to and including `until`.
    pub fn run(&self, corpus: &Corpus, until: StopAfter) -> Result<RunOutcome, PipelineError> {
        let (config_digest, backend) = self.prepare()?;
        let mut ctx = RunCtx {
            corpus,
            config_digest,
            backend,
            started: Instant::now(),
            dirty: false,
        };
        let mut out = RunOutcome::default();

        let (alignments, align) = self.stage(
            &mut ctx,
            "align",
            &[ALIGNMENT_FILE, ALIGN_MANIFEST_FILE],
            || Ok((read_jsonl(&self.path(ALIGNMENT_FILE))?, read_manifest(&self.path(ALIGN_MANIFEST_FILE))?)),
            |ctx| self.compute_align(ctx),
        )?;
        out.alignments = alignments;
        out.align = Some(align.clone());
        if until == StopAfter::Align {
            return Ok(out);
        }

        let index: HashMap<&str, usize> = corpus.samples.iter().enumerate().map(|(i, s)| (s.id.as_str(), i)).collect();
        let mut pool: Vec<usize> = align.ids().map(|id| index[id]).collect();
        pool.sort_unstable();

        let phrases = self.stage(
            &mut ctx,
            "extract",
            &[PHRASES_FILE],
            || read_jsonl(&self.path(PHRASES_FILE)),
            |ctx| self.compute_extract(ctx, &pool),
        )?;
        out.phrases = phrases;
        if until == StopAfter::Extract {
            return Ok(out);
        }

        let interventions = self.stage(
            &mut ctx,
            "forge",
            &[INTERVENTIONS_FILE],
            || read_jsonl(&self.path(INTERVENTIONS_FILE)),
            |ctx| self.compute_forge(ctx, &pool, &out.phrases),
        )?;
        out.interventions = interventions;
        if until == StopAfter::Forge {
            return Ok(out);
        }

        let records: Vec<PasRecord> = self.stage(
            &mut ctx,
            "score",
            &[SCORES_FILE],
            || read_jsonl(&self.path(SCORES_FILE)),
            |ctx| self.compute_scores(ctx, &pool, &out.alignments, &out.interventions),
        )?;
        let mus: Vec<f64> = records.iter().filter_map(|r| r.mu).collect();
        out.pool_stats = Some(PoolStats::compute(&mus).map_err(|e| PipelineError::from(e).in_stage("score"))?);
        out.records = records;
        if until == StopAfter::Score {
            return Ok(out);
        }

        let (cpi, summary) = self.stage(
            &mut ctx,
            "select",
            &[CPI_MANIFEST_FILE, SUMMARY_FILE],
            || {
                let summary: RunSummary = serde_json::from_str(
                    &std::fs::read_to_string(self.path(SUMMARY_FILE)).map_err(|source| PipelineError::Io {
                        path: self.path(SUMMARY_FILE),
                        source,
                    })?,
                )
                .map_err(|e| PipelineError::Artifact {
                    path: self.path(SUMMARY_FILE),
                    reason: e.to_string(),
                })?;
                Ok((read_manifest(&self.path(CPI_MANIFEST_FILE))?, summary))
            },
            |ctx| self.compute_select(ctx, &out),
        )?;
        out.cpi = Some(cpi);
        out.summary = Some(summary);
        Ok(out)
    }

    /// Alignment for every sample: the corpus value when present, else the
    /// backend's `s(I, T)`.
    pub fn alignments(&self, corpus: &Corpus) -> Result<Vec<AlignmentRecord>, PipelineError> {
        let missing: Vec<usize> = (0..corpus.len()).filter(|&i| corpus.samples[i].alignment.is_none()).collect();
        let scored = self.score_chunks(&missing, |i| vec![(corpus.samples[i].image.clone(), corpus.captions[i].clone())], None)?;
        let mut by_index: HashMap<usize, f64> = missing.iter().copied().zip(scored.into_iter().map(|v| v[0])).collect();
        Ok(corpus
            .samples
            .iter()
            .enumerate()
            .map(|(i, s)| match s.alignment {
                Some(a) => AlignmentRecord {
                    id: s.id.clone(),
                    alignment: a,
                    source: AlignmentSource::Corpus,
                },
                None => AlignmentRecord {
                    id: s.id.clone(),
                    alignment: by_index.remove(&i).expect("scored"),
                    source: AlignmentSource::Backend,
                },
            })
            .collect())
    }

    fn compute_align(&self, ctx: &RunCtx) -> Result<(Vec<AlignmentRecord>, SelectionManifest), PipelineError> {
        let corpus = ctx.corpus;
        let alignments = self.alignments(corpus)?;
        self.report(ctx, "align", corpus.len(), corpus.len(), false);
        let pairs: Vec<(String, Option<f64>)> = alignments.iter().map(|a| (a.id.clone(), Some(a.alignment))).collect();
        let manifest = stage1_filter(&pairs, self.config.rho)?.with_provenance(&ctx.config_digest, &corpus.digest);
        write_jsonl(&self.path(ALIGNMENT_FILE), &alignments)?;
        write_manifest(&self.path(ALIGN_MANIFEST_FILE), &manifest)?;
        Ok((alignments, manifest))
    }

    /// Runs the alignment stage and writes one Stage-1 manifest per fraction
    /// (`sweep_rho<ρ>.jsonl`).
    pub fn sweep(&self, corpus: &Corpus, rhos: &[f64]) -> Result<Vec<SelectionManifest>, PipelineError> {
        let outcome = self.run(corpus, StopAfter::Align)?;
        let pairs: Vec<(String, Option<f64>)> = outcome.alignments.iter().map(|a| (a.id.clone(), Some(a.alignment))).collect();
        let digest = self.config.digest(&self.scorer.backend_id());
        let manifests: Vec<SelectionManifest> = sweep(&pairs, rhos)?
            .into_iter()
            .map(|m| m.with_provenance(&digest, &corpus.digest))
            .collect();
        for m in &manifests {
            write_manifest(&self.path(&format!("sweep_rho{:.2}.jsonl", m.header.keep_fraction)), m)?;
        }
        Ok(manifests)
    }

    pub fn phrases_for(&self, sample: &Sample, caption: &str) -> Vec<PhraseSpan> {
        select_phrases(sample, caption, self.config.max_k)
    }

    fn compute_extract(&self, ctx: &RunCtx, pool: &[usize]) -> Result<Vec<PhraseRecord>, PipelineError> {
        let corpus = ctx.corpus;
        let records: Vec<PhraseRecord> = pool
            .par_iter()
            .map(|&i| {
                let caption = &corpus.captions[i];
                let spans = self.phrases_for(&corpus.samples[i], caption);
                let tokens = tag(caption);
                PhraseRecord {
                    id: corpus.samples[i].id.clone(),
                    heads: spans.iter().map(|s| tokens[s.head].surface.clone()).collect(),
                    spans,
                }
            })
            .collect();
        self.report(ctx, "extract", pool.len(), pool.len(), false);
        write_jsonl(&self.path(PHRASES_FILE), &records)?;
        Ok(records)
    }

    fn compute_forge(&self, ctx: &RunCtx, pool: &[usize], phrases: &[PhraseRecord]) -> Result<Vec<Intervention>, PipelineError> {
        let corpus = ctx.corpus;
        let forge = NonceForge::new(self.vocab, self.exclusion);
        let done = AtomicUsize::new(0);
        let per_sample: Vec<Vec<Intervention>> = pool
            .par_iter()
            .zip(phrases.par_iter())
            .map(|(&i, ph)| {
                let caption = &corpus.captions[i];
                let tokens = tag(caption);
                let out = forge.intervene(&ph.id, caption, &tokens, &ph.spans, &self.config.seed_salt);
                let n = done.fetch_add(1, Ordering::Relaxed) + 1;
                if n.is_multiple_of(1000) {
                    self.report(ctx, "forge", n, pool.len(), false);
                }
                out
            })
            .collect::<Result<_, NonceError>>()?;
        self.report(ctx, "forge", pool.len(), pool.len(), false);
        let all: Vec<Intervention> = per_sample.into_iter().flatten().collect();
        write_jsonl(&self.path(INTERVENTIONS_FILE), &all)?;
        Ok(all)
    }

    /// Scores `pairs_of(i)` for every `i` in `items`, sharded into batches
    /// over the rayon pool; results stay index-aligned with `items`.
    fn score_chunks(
        &self,
        items: &[usize],
        pairs_of: impl Fn(usize) -> Vec<(String, String)> + Sync,
        progress: Option<(&RunCtx, &'static str)>,
    ) -> Result<Vec<Vec<f64>>, PipelineError> {
        let done = AtomicUsize::new(0);
        let batch = self.config.batch_size.max(1);
        let chunks: Vec<Vec<Vec<f64>>> = items
            .par_chunks(batch)
            .map(|chunk| {
                let groups: Vec<Vec<(String, String)>> = chunk.iter().map(|&i| pairs_of(i)).collect();
                let flat: Vec<(String, String)> = groups.iter().flatten().cloned().collect();
                let scores = self.scorer.score_pairs(&flat)?;
                let mut it = scores.into_iter();
                let split = groups.iter().map(|g| it.by_ref().take(g.len()).collect()).collect();
                let n = done.fetch_add(chunk.len(), Ordering::Relaxed) + chunk.len();
                if let Some((ctx, stage)) = progress {
                    self.report(ctx, stage, n, items.len(), false);
                }
                Ok(split)
            })
            .collect::<Result<_, ScoringError>>()?;
        Ok(chunks.into_iter().flatten().collect())
    }

    fn compute_scores(
        &self,
        ctx: &RunCtx,
        pool: &[usize],
        alignments: &[AlignmentRecord],
        interventions: &[Intervention],
    ) -> Result<Vec<PasRecord>, PipelineError> {
        let corpus = ctx.corpus;
        let mut by_sample: HashMap<&str, Vec<&str>> = HashMap::new();
        for iv in interventions {
            if let Some(p) = &iv.perturbed_caption {
                by_sample.entry(iv.sample_id.as_str()).or_default().push(p);
            }
        }
        // A backend-computed alignment already is s(I, T) under this scorer.
        let reuse: Vec<Option<f64>> = pool
            .iter()
            .map(|&i| (alignments[i].source == AlignmentSource::Backend).then_some(alignments[i].alignment))
            .collect();
        let pos: HashMap<usize, usize> = pool.iter().enumerate().map(|(p, &i)| (i, p)).collect();
        let scored = self.score_chunks(
            pool,
            |i| {
                let s = &corpus.samples[i];
                let mut pairs = Vec::new();
                if reuse[pos[&i]].is_none() {
                    pairs.push((s.image.clone(), corpus.captions[i].clone()));
                }
                for p in by_sample.get(s.id.as_str()).into_iter().flatten() {
                    pairs.push((s.image.clone(), p.to_string()));
                }
                pairs
            },
            Some((ctx, "score")),
        )?;
        let mut records: Vec<PasRecord> = pool
            .iter()
            .zip(scored)
            .zip(&reuse)
            .map(|((&i, scores), reused)| {
                let (base, perturbed) = match reused {
                    Some(b) => (*b, &scores[..]),
                    None => (scores[0], &scores[1..]),
                };
                let deltas = perturbed.iter().map(|&sp| pas(base, sp)).collect();
                PasRecord::new(corpus.samples[i].id.clone(), base, deltas, self.config.aggregator)
            })
            .collect();
        normalize_records(&mut records)?;
        write_jsonl(&self.path(SCORES_FILE), &records)?;
        Ok(records)
    }

    fn compute_select(&self, ctx: &RunCtx, out: &RunOutcome) -> Result<(SelectionManifest, RunSummary), PipelineError> {
        let corpus = ctx.corpus;
        let manifest = stage2_select(&out.records, corpus.len(), self.config.target_fraction)?
            .with_provenance(&ctx.config_digest, &corpus.digest);
        write_manifest(&self.path(CPI_MANIFEST_FILE), &manifest)?;
        let stats = out.pool_stats.expect("score stage ran");
        let pool = out.records.len();
        let valid = out.records.iter().filter(|r| r.valid).count();
        let mut invalid_reasons = BTreeMap::new();
        for iv in &out.interventions {
            if let Some(r) = &iv.reason {
                *invalid_reasons.entry(r.clone()).or_insert(0) += 1;
            }
        }
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let summary = RunSummary {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            backend: ctx.backend.clone(),
            config_digest: ctx.config_digest.clone(),
            corpus_digest: corpus.digest.clone(),
            original_n: corpus.len(),
            rho: self.config.rho,
            target_fraction: self.config.target_fraction,
            stage1_pool: pool,
            valid,
            excluded_invalid: pool - valid,
            exclusion_rate: ratio(pool - valid, pool),
            coverage: ratio(valid, pool),
            interventions: out.interventions.len(),
            valid_interventions: out.interventions.iter().filter(|i| i.is_valid()).count(),
            invalid_reasons,
            pool_mean: stats.mean,
            pool_std: stats.std,
            kept: manifest.len(),
            dropped_valid: valid - manifest.len(),
            dropped_share_of_valid: ratio(valid - manifest.len(), valid),
        };
        write_json(&self.path(SUMMARY_FILE), &summary)?;
        self.report(ctx, "select", pool, pool, false);
        Ok((manifest, summary))
    }
}
