//! Byte-level BPE tokenizer compatible with the OpenAI CLIP text encoder.
//!
//! The merges file is the one shipped with CLIP (`bpe_simple_vocab_16e6.txt.gz`).
//! Ids are bit-exact with the reference `SimpleTokenizer`, which lets the
//! subtoken-count constraint on nonce replacements be checked locally.

mod clean;
mod fixture;

use std::collections::HashMap;
use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use regex::Regex;
use thiserror::Error;

pub use clean::{normalize, unescape_html};
pub use fixture::{read_fixture, write_fixture, FixtureRow};

/// Number of merge rules the reference tokenizer reads from the merges file.
pub const MAX_MERGES: usize = 49152 - 256 - 2;
/// Scorer context window, including start and end tokens.
pub const CONTEXT_LENGTH: usize = 77;
/// Content tokens that survive truncation to [`CONTEXT_LENGTH`].
pub const MAX_CONTENT_TOKENS: usize = CONTEXT_LENGTH - 2;

pub const START_OF_TEXT: &str = "<|startoftext|>";
pub const END_OF_TEXT: &str = "<|endoftext|>";
const END_OF_WORD: &str = "</w>";

const PRETOKEN_PATTERN: &str = r"(?i)<\|startoftext\|>|<\|endoftext\|>|'s|'t|'re|'ve|'m|'ll|'d|[\p{L}]+|[\p{N}]|[^\s\p{L}\p{N}]+";

#[derive(Debug, Error)]
pub enum BpeError {
    #[error("failed to read vocab {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed vocab at line {line}: {reason}")]
    MalformedVocab { line: usize, reason: String },
    #[error("empty word")]
    EmptyWord,
    #[error("word {0:?} contains whitespace")]
    NotAWord(String),
    #[error("fixture {path}: {reason}")]
    Fixture { path: String, reason: String },
}

/// Token ids of an encoded caption, with the id range of every pre-token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeq {
    pub ids: Vec<u32>,
    /// `[start, end)` ranges into `ids`, one per pre-token (specials included).
    pub word_boundaries: Vec<(usize, usize)>,
    /// Byte spans of each pre-token in the normalized text.
    pub pretoken_spans: Vec<(usize, usize)>,
}

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Exclusive end (in ids) of the last pre-token lying inside `byte_span`.
    pub fn id_end_within(&self, byte_span: (usize, usize)) -> Option<usize> {
        self.pretoken_spans
            .iter()
            .zip(&self.word_boundaries)
            .filter(|((s, e), _)| *s >= byte_span.0 && *e <= byte_span.1 && s < e)
            .map(|(_, (_, end))| *end)
            .max()
    }
}

/// Immutable CLIP vocabulary and merge table. Cheap to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
    merges: Vec<(String, String)>,
    /// (left id, right id) -> (rank, merged id)
    merge_table: HashMap<(u32, u32), (u32, u32)>,
    byte_encoder: Vec<char>,
    /// Id of the bare byte symbol; `+ 256` gives the end-of-word variant.
    byte_ids: Vec<u32>,
    sot: u32,
    eot: u32,
    pattern: PatternHolder,
}

#[derive(Debug, Clone)]
struct PatternHolder(Regex);

impl PartialEq for PatternHolder {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

/// GPT-2 style reversible mapping from bytes to printable code points.
pub fn bytes_to_unicode() -> Vec<(u8, char)> {
    let mut bs: Vec<u32> = (u32::from(b'!')..=u32::from(b'~'))
        .chain(0xA1..=0xAC)
        .chain(0xAE..=0xFF)
        .collect();
    let mut cs = bs.clone();
    let mut n = 0;
    for b in 0..256u32 {
        if !bs.contains(&b) {
            bs.push(b);
            cs.push(256 + n);
            n += 1;
        }
    }
    bs.into_iter()
        .zip(cs)
        .map(|(b, c)| (b as u8, char::from_u32(c).expect("valid code point")))
        .collect()
}

/// Loads a CLIP merges file, plain text or gzip.
pub fn load_vocab(path: impl AsRef<Path>) -> Result<Vocab, BpeError> {
    let path = path.as_ref();
    let io_err = |source| BpeError::Io {
        path: path.display().to_string(),
        source,
    };
    let raw = fs::read(path).map_err(io_err)?;
    let text = if raw.starts_with(&[0x1f, 0x8b]) {
        let mut s = String::new();
        GzDecoder::new(raw.as_slice())
            .read_to_string(&mut s)
            .map_err(io_err)?;
        s
    } else {
        String::from_utf8(raw).map_err(|e| BpeError::MalformedVocab {
            line: 0,
            reason: format!("not UTF-8: {e}"),
        })?
    };
    Vocab::from_merges_text(&text)
}

impl Vocab {
    /// Builds the vocab from the merges file contents. The first line is a
    /// version header and is skipped; at most [`MAX_MERGES`] rules are read.
    pub fn from_merges_text(text: &str) -> Result<Self, BpeError> {
        let mut lines = text.split('\n');
        match lines.next() {
            Some(header) if !header.trim().is_empty() => {}
            _ => {
                return Err(BpeError::MalformedVocab {
                    line: 1,
                    reason: "missing version header".into(),
                })
            }
        }
        let mut merges = Vec::new();
        for (idx, line) in lines.enumerate().take(MAX_MERGES) {
            let line = line.strip_suffix('\r').unwrap_or(line);
            if line.is_empty() {
                // Trailing newline of a short file.
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 2 {
                return Err(BpeError::MalformedVocab {
                    line: idx + 2,
                    reason: format!("expected two parts, found {}: {line:?}", parts.len()),
                });
            }
            merges.push((parts[0].to_string(), parts[1].to_string()));
        }
        if merges.is_empty() {
            return Err(BpeError::MalformedVocab {
                line: 2,
                reason: "no merge rules".into(),
            });
        }
        Ok(Self::from_merges(merges))
    }

    fn from_merges(merges: Vec<(String, String)>) -> Self {
        let byte_map = bytes_to_unicode();
        let mut id_to_token: Vec<String> = byte_map.iter().map(|(_, c)| c.to_string()).collect();
        id_to_token.extend(byte_map.iter().map(|(_, c)| format!("{c}{END_OF_WORD}")));
        id_to_token.extend(merges.iter().map(|(a, b)| format!("{a}{b}")));
        id_to_token.push(START_OF_TEXT.to_string());
        id_to_token.push(END_OF_TEXT.to_string());

        let mut token_to_id = HashMap::with_capacity(id_to_token.len());
        for (id, tok) in id_to_token.iter().enumerate() {
            token_to_id.insert(tok.clone(), id as u32);
        }

        let mut merge_table = HashMap::with_capacity(merges.len());
        for (rank, (a, b)) in merges.iter().enumerate() {
            let (Some(&ia), Some(&ib)) = (token_to_id.get(a), token_to_id.get(b)) else {
                // A rule over unknown symbols can never fire.
                continue;
            };
            let merged = token_to_id[&format!("{a}{b}")];
            merge_table.insert((ia, ib), (rank as u32, merged));
        }

        let mut byte_encoder = vec!['\0'; 256];
        let mut byte_ids = vec![0u32; 256];
        for (b, c) in &byte_map {
            byte_encoder[*b as usize] = *c;
            byte_ids[*b as usize] = token_to_id[&c.to_string()];
        }

        Self {
            sot: token_to_id[START_OF_TEXT],
            eot: token_to_id[END_OF_TEXT],
            token_to_id,
            id_to_token,
            merges,
            merge_table,
            byte_encoder,
            byte_ids,
            pattern: PatternHolder(Regex::new(PRETOKEN_PATTERN).expect("valid pattern")),
        }
    }

    pub fn size(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn start_id(&self) -> u32 {
        self.sot
    }

    pub fn end_id(&self) -> u32 {
        self.eot
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn token_id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    pub fn byte_encoder(&self) -> &[char] {
        &self.byte_encoder
    }

    /// Normalizes and encodes `text`.
    pub fn encode(&self, text: &str, include_specials: bool) -> TokenSeq {
        self.encode_normalized(&normalize(text), include_specials)
    }

    /// Encodes text that has already been through [`normalize`].
    /// Byte spans in the result refer to `text`.
    pub fn encode_normalized(&self, text: &str, include_specials: bool) -> TokenSeq {
        let mut seq = TokenSeq {
            ids: Vec::new(),
            word_boundaries: Vec::new(),
            pretoken_spans: Vec::new(),
        };
        if include_specials {
            seq.ids.push(self.sot);
            seq.word_boundaries.push((0, 1));
            seq.pretoken_spans.push((0, 0));
        }
        for m in self.pattern.0.find_iter(text) {
            let start = seq.ids.len();
            self.bpe_into(m.as_str(), &mut seq.ids);
            seq.word_boundaries.push((start, seq.ids.len()));
            seq.pretoken_spans.push((m.start(), m.end()));
        }
        if include_specials {
            let n = seq.ids.len();
            seq.ids.push(self.eot);
            seq.word_boundaries.push((n, n + 1));
            seq.pretoken_spans.push((text.len(), text.len()));
        }
        seq
    }

    /// Number of subtokens `word` occupies as a standalone whole word.
    pub fn count_subtokens(&self, word: &str) -> Result<usize, BpeError> {
        if word.is_empty() {
            return Err(BpeError::EmptyWord);
        }
        if word.chars().any(char::is_whitespace) {
            return Err(BpeError::NotAWord(word.to_string()));
        }
        let normalized = normalize(word);
        if normalized.is_empty() {
            return Err(BpeError::EmptyWord);
        }
        Ok(self.encode_normalized(&normalized, false).len())
    }

    fn bpe_into(&self, pretoken: &str, out: &mut Vec<u32>) {
        if pretoken == START_OF_TEXT || pretoken == END_OF_TEXT {
            out.push(self.token_to_id[pretoken]);
            return;
        }
        let bytes = pretoken.as_bytes();
        let mut symbols: Vec<u32> = bytes.iter().map(|&b| self.byte_ids[b as usize]).collect();
        if let Some(last) = symbols.last_mut() {
            *last += 256;
        }
        while symbols.len() > 1 {
            let best = symbols
                .windows(2)
                .filter_map(|w| self.merge_table.get(&(w[0], w[1])).map(|&(rank, merged)| (rank, w[0], w[1], merged)))
                .min_by_key(|&(rank, ..)| rank);
            let Some((_, left, right, merged)) = best else {
                break;
            };
            let mut next = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && symbols[i] == left && symbols[i + 1] == right {
                    next.push(merged);
                    i += 2;
                } else {
                    next.push(symbols[i]);
                    i += 1;
                }
            }
            symbols = next;
        }
        out.extend(symbols);
    }
}
