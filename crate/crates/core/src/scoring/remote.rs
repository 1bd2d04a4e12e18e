//! HTTP embedding client.
//!
//! `POST {endpoint}/v1/embed` with `{"kind": "text"|"image", "items": [...]}`
//! answers `{"dim": n, "embeddings": [[...], ...]}`, index-aligned with the
//! request. Transport errors and non-200 replies are retried with doubling
//! backoff; after the last attempt the backend is reported unavailable.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Embedding, Scorer, ScoringError};

pub const REMOTE_ATTEMPTS: u32 = 3;
const INITIAL_BACKOFF: Duration = Duration::from_millis(200);
const BATCH_SIZE: usize = 256;

#[derive(Serialize)]
struct EmbedRequest<'a> {
    kind: &'a str,
    items: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    dim: usize,
    embeddings: Vec<Vec<f32>>,
}

#[derive(Debug)]
pub struct RemoteScorer {
    endpoint: String,
    client: reqwest::blocking::Client,
    initial_backoff: Duration,
}

impl RemoteScorer {
    pub fn new(endpoint: &str, timeout: Duration) -> Result<Self, ScoringError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ScoringError::BackendUnavailable(e.to_string()))?;
        Ok(Self {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            client,
            initial_backoff: INITIAL_BACKOFF,
        })
    }

    pub fn with_initial_backoff(mut self, backoff: Duration) -> Self {
        self.initial_backoff = backoff;
        self
    }

    fn request(&self, kind: &str, items: &[String]) -> Result<Vec<Embedding>, ScoringError> {
        let url = format!("{}/v1/embed", self.endpoint);
        let mut backoff = self.initial_backoff;
        let mut last = String::new();
        for attempt in 1..=REMOTE_ATTEMPTS {
            match self.client.post(&url).json(&EmbedRequest { kind, items }).send() {
                Ok(resp) if resp.status() == reqwest::StatusCode::OK => {
                    let body: EmbedResponse = resp
                        .json()
                        .map_err(|e| ScoringError::BackendUnavailable(format!("{url}: bad response body: {e}")))?;
                    return validate(body, items.len(), &url);
                }
                Ok(resp) => last = format!("{url}: HTTP {}", resp.status()),
                Err(e) => last = format!("{url}: {e}"),
            }
            if attempt < REMOTE_ATTEMPTS {
                std::thread::sleep(backoff);
                backoff *= 2;
            }
        }
        Err(ScoringError::BackendUnavailable(format!(
            "{last} (after {REMOTE_ATTEMPTS} attempts)"
        )))
    }

    fn embed(&self, kind: &str, items: &[String]) -> Result<Vec<Embedding>, ScoringError> {
        let mut out = Vec::with_capacity(items.len());
        for chunk in items.chunks(BATCH_SIZE) {
            out.extend(self.request(kind, chunk)?);
        }
        Ok(out)
    }
}

fn validate(body: EmbedResponse, expected: usize, url: &str) -> Result<Vec<Embedding>, ScoringError> {
    if body.embeddings.len() != expected {
        return Err(ScoringError::BackendUnavailable(format!(
            "{url}: {} embeddings for {expected} items",
            body.embeddings.len()
        )));
    }
    body.embeddings
        .into_iter()
        .map(|v| {
            if v.len() == body.dim {
                Ok(Embedding::normalized(v))
            } else {
                Err(ScoringError::DimMismatch {
                    left: v.len(),
                    right: body.dim,
                })
            }
        })
        .collect()
}

impl Scorer for RemoteScorer {
    fn backend_id(&self) -> String {
        format!("remote:{}", self.endpoint)
    }

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Embedding>, ScoringError> {
        self.embed("text", texts)
    }

    fn embed_images(&self, images: &[String]) -> Result<Vec<Embedding>, ScoringError> {
        self.embed("image", images)
    }
}
