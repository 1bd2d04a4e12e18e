//! Phrase-level counterfactual curation of image-caption corpora.
//!
//! A corpus is first cut to its best-aligned fraction; every surviving
//! caption then has its phrase heads replaced, one at a time, by nonce
//! words that keep the CLIP token count and surface form. The mean drop in
//! image-text similarity, z-normalized over the pool, ranks samples for the
//! final subset.
//!
//! Modules, bottom-up: [`bpe`] (tokenizer), [`phrase`] (chunker),
//! [`nonce`] (replacements), [`scoring`] (backends and cache), [`pas`]
//! (drops and normalization), [`pipeline`] (stages and manifests),
//! [`diagnostics`] (post-hoc analyses over run artifacts).

pub mod bpe;
pub mod diagnostics;
pub mod hash;
pub mod lexicon;
pub mod nonce;
pub mod pas;
pub mod phrase;
pub mod pipeline;
pub mod scoring;

pub use bpe::{load_vocab, normalize, BpeError, TokenSeq, Vocab};
pub use diagnostics::{ControlMode, ControlResult, CorrelationReport, DiagError};
pub use lexicon::{CategoryLexicon, ExclusionLexicon};
pub use nonce::{Forged, Intervention, NonceError, NonceForge, SurfaceProfile};
pub use pas::{Aggregator, PasError, PasRecord, PoolStats};
pub use phrase::{PhraseSpan, SpanKind, Tag, WordToken};
pub use pipeline::{
    Corpus, ErrorClass, ManifestEntry, ManifestHeader, Pipeline, PipelineConfig, PipelineError, RunSummary, Sample,
    SelectionManifest, Stage, StopAfter,
};
pub use scoring::{Embedding, Scorer, ScoringError};

/// Version of the JSONL manifest, scores and interventions layouts.
pub const ARTIFACT_FORMAT_VERSION: u32 = 1;
