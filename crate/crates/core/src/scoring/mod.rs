//! Image-text similarity backends.
//!
//! Every backend maps images and captions to unit vectors and scores a pair
//! by cosine. Images are never decoded here: an image reference is either a
//! key into an embedding store, an id sent to a remote service, or (for the
//! synthetic backend) a declared tag set.

mod cache;
mod remote;
mod synthetic;

use std::path::PathBuf;

use thiserror::Error;

pub use cache::{CachedScorer, EmbeddingStore, CACHE_FORMAT_VERSION};
pub use remote::{RemoteScorer, REMOTE_ATTEMPTS};
pub use synthetic::{SyntheticScorer, DEFAULT_SYNTHETIC_DIM, SYNTH_PREFIX};

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("embedding backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("no cached embedding for {0:?}")]
    CacheMiss(String),
    #[error("{path}: {reason}")]
    CacheFormat { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// A unit-length vector, or the zero vector for inputs with no content.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    vector: Vec<f32>,
}

impl Embedding {
    /// Scales `vector` to unit L2 norm; an all-zero input stays zero.
    pub fn normalized(vector: Vec<f32>) -> Self {
        let norm = vector.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Self { vector };
        }
        Self {
            vector: vector.into_iter().map(|x| (f64::from(x) / norm) as f32).collect(),
        }
    }

    /// Wraps a vector already known to be unit length (e.g. read back from a store).
    pub fn from_unit(vector: Vec<f32>) -> Self {
        Self { vector }
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.vector
    }
}

/// Cosine of two embeddings, accumulated in f64 and clamped to [-1, 1].
pub fn similarity(a: &Embedding, b: &Embedding) -> Result<f64, ScoringError> {
    if a.dim() != b.dim() {
        return Err(ScoringError::DimMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let dot: f64 = a.vector.iter().zip(&b.vector).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum();
    let na: f64 = a.vector.iter().map(|&x| f64::from(x) * f64::from(x)).sum();
    let nb: f64 = b.vector.iter().map(|&x| f64::from(x) * f64::from(x)).sum();
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// An image-text scorer. Outputs are index-aligned with inputs.
pub trait Scorer: Send + Sync {
    /// Stable identity written into stage markers; runs refuse to mix backends.
    fn backend_id(&self) -> String;

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Embedding>, ScoringError>;

    fn embed_images(&self, images: &[String]) -> Result<Vec<Embedding>, ScoringError>;

    /// `s(I, T)` for each `(image, caption)` pair.
    fn score_pairs(&self, pairs: &[(String, String)]) -> Result<Vec<f64>, ScoringError> {
        let images: Vec<String> = pairs.iter().map(|(i, _)| i.clone()).collect();
        let texts: Vec<String> = pairs.iter().map(|(_, t)| t.clone()).collect();
        let ie = self.embed_images(&images)?;
        let te = self.embed_texts(&texts)?;
        ie.iter().zip(&te).map(|(i, t)| similarity(i, t)).collect()
    }

    /// Cosine between the text embeddings of each pair.
    fn text_similarity_pairs(&self, pairs: &[(String, String)]) -> Result<Vec<f64>, ScoringError> {
        let a: Vec<String> = pairs.iter().map(|(x, _)| x.clone()).collect();
        let b: Vec<String> = pairs.iter().map(|(_, y)| y.clone()).collect();
        let ea = self.embed_texts(&a)?;
        let eb = self.embed_texts(&b)?;
        ea.iter().zip(&eb).map(|(x, y)| similarity(x, y)).collect()
    }
}

/// Maps every score `s` of `inner` to `scale * s + shift`.
pub struct AffineScorer<S> {
    pub inner: S,
    pub scale: f64,
    pub shift: f64,
}

impl<S: Scorer> Scorer for AffineScorer<S> {
    fn backend_id(&self) -> String {
        format!("affine({},{},{})", self.scale, self.shift, self.inner.backend_id())
    }

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Embedding>, ScoringError> {
        self.inner.embed_texts(texts)
    }

    fn embed_images(&self, images: &[String]) -> Result<Vec<Embedding>, ScoringError> {
        self.inner.embed_images(images)
    }

    fn score_pairs(&self, pairs: &[(String, String)]) -> Result<Vec<f64>, ScoringError> {
        Ok(self
            .inner
            .score_pairs(pairs)?
            .into_iter()
            .map(|s| self.scale * s + self.shift)
            .collect())
    }
}

impl<S: Scorer + ?Sized> Scorer for Box<S> {
    fn backend_id(&self) -> String {
        (**self).backend_id()
    }
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Embedding>, ScoringError> {
        (**self).embed_texts(texts)
    }
    fn embed_images(&self, images: &[String]) -> Result<Vec<Embedding>, ScoringError> {
        (**self).embed_images(images)
    }
    fn score_pairs(&self, pairs: &[(String, String)]) -> Result<Vec<f64>, ScoringError> {
        (**self).score_pairs(pairs)
    }
    fn text_similarity_pairs(&self, pairs: &[(String, String)]) -> Result<Vec<f64>, ScoringError> {
        (**self).text_similarity_pairs(pairs)
    }
}
