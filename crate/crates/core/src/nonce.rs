//! Nonce replacements for phrase heads.
//!
//! A replacement must (i) occupy the same number of CLIP subtokens as the
//! word it replaces, both whole and with its suffix detached, (ii) keep its
//! capitalization, plural and possessive marking, and (iii) not be an
//! English word. Candidates are pronounceable
//! consonant/vowel strings drawn from a ChaCha stream seeded per
//! `(sample, phrase, word)`, so results do not depend on scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bpe::{BpeError, Vocab, MAX_CONTENT_TOKENS};
use crate::hash::fnv1a64;
use crate::lexicon::ExclusionLexicon;
use crate::phrase::{PhraseSpan, WordToken};

pub const MAX_ATTEMPTS: usize = 64;
pub const NO_CONFORMING_NONCE: &str = "no conforming nonce";
pub const BEYOND_CONTEXT: &str = "head beyond context length";

const CONSONANTS: &[u8] = b"bdfgklmnprtvz";
const VOWELS: &[u8] = b"aeiou";
const SIBILANT_ENDINGS: &[u8] = b"xz";
/// Two-letter CV strings are nearly all excluded words or multi-token.
const MIN_BASE_LEN: usize = 3;

#[derive(Debug, Error)]
pub enum NonceError {
    #[error("empty word")]
    EmptyWord,
    #[error("span {span:?} holds {found:?}, expected {expected:?}")]
    SpanMismatch {
        span: (usize, usize),
        expected: String,
        found: String,
    },
    #[error(transparent)]
    Tokenizer(#[from] BpeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capitalization {
    Lower,
    InitialUpper,
    AllUpper,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SurfaceProfile {
    pub capitalization: Capitalization,
    pub plural: bool,
    pub possessive: bool,
    /// Lowercase suffix detached from the stem: `s`, `es`, `'s`, `s'` or empty.
    pub raw_suffix: String,
}

/// Detects capitalization and plural/possessive marking.
pub fn profile(word: &str) -> Result<SurfaceProfile, NonceError> {
    if word.is_empty() {
        return Err(NonceError::EmptyWord);
    }
    let letters: Vec<char> = word.chars().filter(|c| c.is_alphabetic()).collect();
    let first_upper = word.chars().next().is_some_and(char::is_uppercase);
    let capitalization = if letters.len() >= 2 && letters.iter().all(|c| c.is_uppercase()) {
        Capitalization::AllUpper
    } else if first_upper {
        Capitalization::InitialUpper
    } else {
        Capitalization::Lower
    };
    let (plural, possessive, suffix) = detect_suffix(&word.to_lowercase());
    Ok(SurfaceProfile {
        capitalization,
        plural,
        possessive,
        raw_suffix: suffix.to_string(),
    })
}

fn detect_suffix(lower: &str) -> (bool, bool, &'static str) {
    let n = lower.chars().count();
    if n > 2 && lower.ends_with("'s") {
        return (false, true, "'s");
    }
    if n > 2 && lower.ends_with("s'") {
        return (true, true, "s'");
    }
    if let Some(stem) = lower.strip_suffix("es") {
        let sibilant = ["s", "x", "z", "ch", "sh"].iter().any(|e| stem.ends_with(e));
        if sibilant && stem.chars().count() >= 2 {
            return (true, false, "es");
        }
    }
    if n >= 4 && lower.ends_with('s') && !["ss", "us", "is"].iter().any(|e| lower.ends_with(e)) {
        return (true, false, "s");
    }
    (false, false, "")
}

/// `word` without its plural/possessive suffix, original case preserved.
pub fn stem(word: &str) -> Result<&str, NonceError> {
    let p = profile(word)?;
    Ok(&word[..word.len() - p.raw_suffix.len()])
}

/// Re-attaches the suffix and re-applies the capitalization of `profile`.
pub fn apply_profile(base: &str, profile: &SurfaceProfile) -> String {
    let lower = format!("{}{}", base.to_lowercase(), profile.raw_suffix);
    match profile.capitalization {
        Capitalization::Lower => lower,
        Capitalization::AllUpper => lower.to_uppercase(),
        Capitalization::InitialUpper => {
            let mut chars = lower.chars();
            match chars.next() {
                Some(c) => c.to_uppercase().chain(chars).collect(),
                None => lower,
            }
        }
    }
}

/// Seed for one `(sample, phrase, word)` triple.
pub fn seed_for(sample_id: &str, phrase_index: usize, word: &str, salt: &str) -> u64 {
    let mut material = format!("{sample_id}|{phrase_index}|{word}");
    if !salt.is_empty() {
        material.push('|');
        material.push_str(salt);
    }
    fnv1a64(material.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Forged {
    Nonce(String),
    Invalid(String),
}

impl Forged {
    pub fn nonce(&self) -> Option<&str> {
        match self {
            Forged::Nonce(s) => Some(s),
            Forged::Invalid(_) => None,
        }
    }
}

/// One `(sample, phrase)` intervention, valid or not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intervention {
    pub sample_id: String,
    pub phrase_index: usize,
    pub word: String,
    pub replacement: Option<String>,
    pub reason: Option<String>,
    pub perturbed_caption: Option<String>,
}

impl Intervention {
    pub fn is_valid(&self) -> bool {
        self.perturbed_caption.is_some()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NonceForge<'a> {
    vocab: &'a Vocab,
    exclusion: &'a ExclusionLexicon,
    max_attempts: usize,
}

impl<'a> NonceForge<'a> {
    pub fn new(vocab: &'a Vocab, exclusion: &'a ExclusionLexicon) -> Self {
        Self {
            vocab,
            exclusion,
            max_attempts: MAX_ATTEMPTS,
        }
    }

    pub fn with_max_attempts(mut self, attempts: usize) -> Self {
        self.max_attempts = attempts;
        self
    }

    pub fn vocab(&self) -> &'a Vocab {
        self.vocab
    }

    pub fn exclusion(&self) -> &'a ExclusionLexicon {
        self.exclusion
    }

    /// Forges a replacement for `word`. `context` holds the other words of
    /// the caption (any case); a candidate equal to one of them is rejected.
    pub fn forge(&self, word: &str, seed: u64, context: &[&str]) -> Result<Forged, NonceError> {
        let target_profile = profile(word)?;
        let target = self.vocab.count_subtokens(word)?;
        let word_stem = stem(word)?;
        let stem_target = if word_stem.is_empty() { 0 } else { self.vocab.count_subtokens(word_stem)? };
        let word_lower = word.to_lowercase();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Nonce syllables average a little over two characters per subtoken.
        let mut len = (2 * target + 1).clamp(MIN_BASE_LEN, 48);
        for _ in 0..self.max_attempts {
            let base = cv_base(&mut rng, len, &target_profile.raw_suffix);
            let candidate = apply_profile(&base, &target_profile);
            let count = self.vocab.count_subtokens(&candidate)?;
            if count != target {
                len = if count < target { len + 1 } else { len.saturating_sub(1).max(MIN_BASE_LEN) };
                continue;
            }
            if profile(&candidate)? != target_profile {
                continue;
            }
            if !target_profile.raw_suffix.is_empty() && self.vocab.count_subtokens(&base)? != stem_target {
                continue;
            }
            let lower = candidate.to_lowercase();
            if self.exclusion.contains(&base) || self.exclusion.contains(&lower) {
                continue;
            }
            if lower == word_lower || context.iter().any(|w| w.to_lowercase() == lower) {
                continue;
            }
            return Ok(Forged::Nonce(candidate));
        }
        Ok(Forged::Invalid(NO_CONFORMING_NONCE.to_string()))
    }
}

impl NonceForge<'_> {
    /// One intervention per selected span of a normalized caption.
    ///
    /// Heads whose subtokens end past the scorer's context cap are Invalid:
    /// truncation would hide the replacement from the scorer.
    pub fn intervene(
        &self,
        sample_id: &str,
        caption: &str,
        tokens: &[WordToken],
        spans: &[PhraseSpan],
        salt: &str,
    ) -> Result<Vec<Intervention>, NonceError> {
        let encoded = self.vocab.encode_normalized(caption, false);
        let mut out = Vec::with_capacity(spans.len());
        for (phrase_index, span) in spans.iter().enumerate() {
            let head = &tokens[span.head];
            let word = head.surface.as_str();
            let mut record = Intervention {
                sample_id: sample_id.to_string(),
                phrase_index,
                word: word.to_string(),
                replacement: None,
                reason: None,
                perturbed_caption: None,
            };
            if encoded.id_end_within(head.char_span).is_some_and(|end| end > MAX_CONTENT_TOKENS) {
                record.reason = Some(BEYOND_CONTEXT.to_string());
                out.push(record);
                continue;
            }
            let context: Vec<&str> = tokens
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != span.head)
                .map(|(_, t)| t.surface.as_str())
                .collect();
            let seed = seed_for(sample_id, phrase_index, word, salt);
            match self.forge(word, seed, &context)? {
                Forged::Nonce(r) => {
                    record.perturbed_caption = Some(apply(caption, head.char_span, word, &r)?);
                    record.replacement = Some(r);
                }
                Forged::Invalid(reason) => record.reason = Some(reason),
            }
            out.push(record);
        }
        Ok(out)
    }
}

fn cv_base(rng: &mut ChaCha8Rng, len: usize, suffix: &str) -> String {
    let mut vowel = rng.random_bool(0.5);
    let mut s = String::with_capacity(len + 1);
    for _ in 0..len {
        let pool = if vowel { VOWELS } else { CONSONANTS };
        s.push(pool[rng.random_range(0..pool.len())] as char);
        vowel = !vowel;
    }
    if suffix == "es" {
        let end = SIBILANT_ENDINGS[rng.random_range(0..SIBILANT_ENDINGS.len())] as char;
        if s.ends_with(|c: char| VOWELS.contains(&(c as u8))) {
            s.push(end);
        } else {
            s.pop();
            s.push(end);
        }
    }
    s
}

/// Replaces the word at `span` (byte offsets) with `replacement`.
pub fn apply(caption: &str, span: (usize, usize), word: &str, replacement: &str) -> Result<String, NonceError> {
    let found = caption.get(span.0..span.1);
    if found != Some(word) {
        return Err(NonceError::SpanMismatch {
            span,
            expected: word.to_string(),
            found: found.unwrap_or_default().to_string(),
        });
    }
    let mut out = String::with_capacity(caption.len() + replacement.len());
    out.push_str(&caption[..span.0]);
    out.push_str(replacement);
    out.push_str(&caption[span.1..]);
    Ok(out)
}
