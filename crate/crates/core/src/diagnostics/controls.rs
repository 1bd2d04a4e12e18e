//! Real-word substitution controls.
//!
//! A head is replaced by another word from its own category or from a
//! different one, under the same subtoken-count and surface constraints as
//! a nonce. Comparing mean drops across nonce, same-category and
//! cross-category replacements on the same (sample, phrase) pairs places
//! the nonce drop relative to semantically graded real-word changes.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DiagError;
use crate::bpe::Vocab;
use crate::lexicon::CategoryLexicon;
use crate::nonce::{apply, apply_profile, profile, seed_for, stem, NonceForge};
use crate::pas::{compensated_sum, pas};
use crate::phrase::tag;
use crate::pipeline::{select_phrases, Sample};
use crate::scoring::Scorer;

pub const MIN_CONTROL_PAIRS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    Nonce,
    SameCategory,
    CrossCategory,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlResult {
    pub mode: ControlMode,
    pub mean_delta: f64,
    pub n: usize,
}

/// A real-word replacement for `word`, or `None` when the lexicon has no
/// conforming candidate. `seed` orders the candidates.
pub fn realword_control(word: &str, mode: ControlMode, seed: u64, vocab: &Vocab, lexicon: &CategoryLexicon) -> Option<String> {
    let target = profile(word).ok()?;
    let lower = word.to_lowercase();
    let base = stem(word).ok()?.to_lowercase();
    let category = lexicon.category(&lower).or_else(|| lexicon.category(&base))?;
    let mut pool: Vec<&str> = match mode {
        ControlMode::Nonce => return None,
        ControlMode::SameCategory => lexicon.members(category).iter().map(String::as_str).collect(),
        ControlMode::CrossCategory => lexicon
            .categories()
            .filter(|&c| c != category)
            .flat_map(|c| lexicon.members(c).iter().map(String::as_str))
            .collect(),
    };
    pool.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let count = vocab.count_subtokens(word).ok()?;
    pool.into_iter()
        .filter(|&c| c != base && c != lower)
        .map(|c| apply_profile(c, &target))
        .find(|c| {
            profile(c).ok().as_ref() == Some(&target) && vocab.count_subtokens(c).ok() == Some(count)
        })
}

/// Mean drop per mode over (sample, phrase) pairs where all three modes
/// produced a replacement, stopping after `n_interventions` such pairs.
pub fn control_comparison(
    samples: &[(&Sample, &str)],
    n_interventions: usize,
    scorer: &dyn Scorer,
    forge: &NonceForge,
    lexicon: &CategoryLexicon,
    max_k: usize,
    salt: &str,
) -> Result<[ControlResult; 3], DiagError> {
    let vocab = forge.vocab();
    let mut pairs: Vec<(String, String)> = Vec::new();
    let mut matched = 0;
    'outer: for &(sample, caption) in samples {
        let tokens = tag(caption);
        let spans = select_phrases(sample, caption, max_k);
        for (phrase_index, span) in spans.iter().enumerate() {
            if matched == n_interventions {
                break 'outer;
            }
            let head = &tokens[span.head];
            let word = head.surface.as_str();
            let context: Vec<&str> = tokens
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != span.head)
                .map(|(_, t)| t.surface.as_str())
                .collect();
            let seed = seed_for(&sample.id, phrase_index, word, salt);
            let Some(nonce) = forge.forge(word, seed, &context)?.nonce().map(str::to_string) else {
                continue;
            };
            let same = realword_control(word, ControlMode::SameCategory, seed ^ 1, vocab, lexicon);
            let cross = realword_control(word, ControlMode::CrossCategory, seed ^ 2, vocab, lexicon);
            let (Some(same), Some(cross)) = (same, cross) else {
                continue;
            };
            pairs.push((sample.image.clone(), caption.to_string()));
            for r in [&nonce, &same, &cross] {
                let perturbed = apply(caption, head.char_span, word, r)?;
                pairs.push((sample.image.clone(), perturbed));
            }
            matched += 1;
        }
    }
    if matched < MIN_CONTROL_PAIRS || n_interventions == 0 {
        return Err(DiagError::InsufficientPairs {
            found: matched,
            needed: MIN_CONTROL_PAIRS,
        });
    }
    let scores = scorer.score_pairs(&pairs)?;
    let modes = [ControlMode::Nonce, ControlMode::SameCategory, ControlMode::CrossCategory];
    let mut out = [ControlResult { mode: ControlMode::Nonce, mean_delta: 0.0, n: matched }; 3];
    for (m, mode) in modes.into_iter().enumerate() {
        let deltas = scores.chunks_exact(4).map(|q| pas(q[0], q[m + 1]));
        out[m] = ControlResult {
            mode,
            mean_delta: compensated_sum(deltas) / matched as f64,
            n: matched,
        };
    }
    Ok(out)
}
