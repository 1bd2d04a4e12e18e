//! Corpus JSONL reader.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::bpe::normalize;
use crate::phrase::{segment, SpanKind};

pub const MAX_LINE_BYTES: usize = 1 << 20;

/// A pre-annotated span; word indices refer to the words and punctuation
/// runs of the normalized caption, as produced by [`segment`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanAnnotation {
    pub start_word: usize,
    pub end_word: usize,
    pub kind: SpanKind,
    pub head_word: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub image: String,
    pub caption: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alignment: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spans: Option<Vec<SpanAnnotation>>,
}

/// A loaded corpus. `captions` holds the normalized captions, index-aligned
/// with `samples`; `digest` is the SHA-256 of the file bytes.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub samples: Vec<Sample>,
    pub captions: Vec<String>,
    pub digest: String,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Builds a corpus from in-memory samples, validating as the reader does.
    pub fn from_samples(samples: Vec<Sample>) -> Result<Corpus, PipelineError> {
        let mut hasher = Sha256::new();
        let mut seen = HashSet::with_capacity(samples.len());
        let mut captions = Vec::with_capacity(samples.len());
        for (i, s) in samples.iter().enumerate() {
            let line = serde_json::to_string(s).expect("sample serializes");
            hasher.update(line.as_bytes());
            hasher.update(b"\n");
            captions.push(validate(s, i + 1, &mut seen)?);
        }
        Ok(Corpus {
            samples,
            captions,
            digest: hex::encode(hasher.finalize()),
        })
    }
}

fn data_err(line: usize, reason: impl Into<String>) -> PipelineError {
    PipelineError::Corpus {
        line,
        reason: reason.into(),
    }
}

fn validate(s: &Sample, line: usize, seen: &mut HashSet<String>) -> Result<String, PipelineError> {
    if s.id.is_empty() {
        return Err(data_err(line, "empty id"));
    }
    if !seen.insert(s.id.clone()) {
        return Err(data_err(line, format!("duplicate id {:?}", s.id)));
    }
    if s.alignment.is_some_and(|a| !a.is_finite()) {
        return Err(data_err(line, "alignment is not finite"));
    }
    let caption = normalize(&s.caption);
    if caption.is_empty() {
        return Err(data_err(line, format!("caption of {:?} is empty after normalization", s.id)));
    }
    if let Some(spans) = &s.spans {
        let n = segment(&caption).len();
        for a in spans {
            let ordered = a.start_word <= a.head_word && a.head_word <= a.end_word;
            if !ordered || a.end_word >= n {
                return Err(data_err(
                    line,
                    format!("span {a:?} of {:?} is out of order or beyond its {n} words", s.id),
                ));
            }
        }
    }
    Ok(caption)
}

/// Reads and validates a corpus file. Lines over 1 MiB are rejected; blank
/// lines are skipped.
pub fn read_corpus(path: impl AsRef<Path>) -> Result<Corpus, PipelineError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = BufReader::new(file);
    let mut hasher = Sha256::new();
    let mut seen = HashSet::new();
    let mut samples = Vec::new();
    let mut captions = Vec::new();
    let mut buf = Vec::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        let n = (&mut reader)
            .take(MAX_LINE_BYTES as u64 + 2)
            .read_until(b'\n', &mut buf)
            .map_err(|source| PipelineError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        if n == 0 {
            break;
        }
        line_no += 1;
        hasher.update(&buf);
        let body = buf.strip_suffix(b"\n").unwrap_or(&buf);
        let body = body.strip_suffix(b"\r").unwrap_or(body);
        if body.len() > MAX_LINE_BYTES {
            return Err(data_err(line_no, "line exceeds 1 MiB"));
        }
        let text = std::str::from_utf8(body).map_err(|_| data_err(line_no, "not UTF-8"))?;
        if text.trim().is_empty() {
            continue;
        }
        let sample: Sample = serde_json::from_str(text).map_err(|e| data_err(line_no, e.to_string()))?;
        captions.push(validate(&sample, line_no, &mut seen)?);
        samples.push(sample);
    }
    Ok(Corpus {
        samples,
        captions,
        digest: hex::encode(hasher.finalize()),
    })
}
