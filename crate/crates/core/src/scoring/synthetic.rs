//! Hashed bag-of-words scorer with an analytically known similarity.
//!
//! Each lowercased word adds weight 1 at bucket `fnv1a64(word) mod d`; a
//! synthetic image `synth:<tags>` is embedded from its tag words the same
//! way. Pair scores are computed on the sparse counts in f64, so they equal
//! the closed-form cosine of the two bags exactly up to rounding.

use std::collections::BTreeMap;

use super::{Embedding, Scorer, ScoringError};
use crate::hash::fnv1a64;
use crate::phrase::segment;

pub const DEFAULT_SYNTHETIC_DIM: usize = 256;
pub const SYNTH_PREFIX: &str = "synth:";

#[derive(Debug, Clone, Copy)]
pub struct SyntheticScorer {
    dim: usize,
}

impl Default for SyntheticScorer {
    fn default() -> Self {
        Self::new(DEFAULT_SYNTHETIC_DIM)
    }
}

impl SyntheticScorer {
    /// # Panics
    /// If `dim` is zero.
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "synthetic dimension must be positive");
        Self { dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Lowercased words of `text`; punctuation runs are skipped.
    pub fn words(text: &str) -> Vec<String> {
        let lower = text.to_lowercase();
        segment(&lower)
            .into_iter()
            .map(|(s, e)| &lower[s..e])
            .filter(|w| w.chars().any(char::is_alphanumeric))
            .map(str::to_string)
            .collect()
    }

    pub fn bucket(&self, word: &str) -> usize {
        (fnv1a64(word.to_lowercase().as_bytes()) % self.dim as u64) as usize
    }

    /// Sparse bucket counts of `text`.
    pub fn bag(&self, text: &str) -> BTreeMap<usize, f64> {
        let mut bag = BTreeMap::new();
        for w in Self::words(text) {
            *bag.entry(self.bucket(&w)).or_insert(0.0) += 1.0;
        }
        bag
    }

    fn image_text(image: &str) -> &str {
        image.strip_prefix(SYNTH_PREFIX).unwrap_or(image)
    }

    fn dense(&self, bag: &BTreeMap<usize, f64>) -> Embedding {
        let mut v = vec![0.0f32; self.dim];
        for (&i, &c) in bag {
            v[i] = c as f32;
        }
        Embedding::normalized(v)
    }

    /// Exact cosine of two sparse bags; zero when either is empty.
    pub fn bag_cosine(a: &BTreeMap<usize, f64>, b: &BTreeMap<usize, f64>) -> f64 {
        let dot: f64 = a.iter().filter_map(|(k, x)| b.get(k).map(|y| x * y)).sum();
        let na: f64 = a.values().map(|x| x * x).sum();
        let nb: f64 = b.values().map(|x| x * x).sum();
        if na == 0.0 || nb == 0.0 {
            return 0.0;
        }
        dot / (na.sqrt() * nb.sqrt())
    }
}

impl Scorer for SyntheticScorer {
    fn backend_id(&self) -> String {
        format!("synthetic:d={}", self.dim)
    }

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Embedding>, ScoringError> {
        Ok(texts.iter().map(|t| self.dense(&self.bag(t))).collect())
    }

    fn embed_images(&self, images: &[String]) -> Result<Vec<Embedding>, ScoringError> {
        Ok(images.iter().map(|i| self.dense(&self.bag(Self::image_text(i)))).collect())
    }

    fn score_pairs(&self, pairs: &[(String, String)]) -> Result<Vec<f64>, ScoringError> {
        Ok(pairs
            .iter()
            .map(|(i, t)| Self::bag_cosine(&self.bag(Self::image_text(i)), &self.bag(t)))
            .collect())
    }

    fn text_similarity_pairs(&self, pairs: &[(String, String)]) -> Result<Vec<f64>, ScoringError> {
        Ok(pairs
            .iter()
            .map(|(a, b)| Self::bag_cosine(&self.bag(a), &self.bag(b)))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::similarity;

    fn pair(i: &str, t: &str) -> Vec<(String, String)> {
        vec![(i.to_string(), t.to_string())]
    }

    fn collision_free(s: &SyntheticScorer, words: &[&str]) -> bool {
        let mut b: Vec<usize> = words.iter().map(|w| s.bucket(w)).collect();
        b.sort_unstable();
        b.windows(2).all(|w| w[0] != w[1])
    }

    #[test]
    fn matching_tag_set_scores_one() {
        let s = SyntheticScorer::default();
        let v = s.score_pairs(&pair("synth:bench dog a on a", "a dog on a bench")).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-12);
        let e = s.embed_texts(&["a dog on a bench".into()]).unwrap();
        let i = s.embed_images(&["synth:bench dog a on a".into()]).unwrap();
        assert!((similarity(&e[0], &i[0]).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn disjoint_collision_free_words_score_zero() {
        let s = SyntheticScorer::default();
        let words = ["cat", "tree", "boat", "horse"];
        assert!(collision_free(&s, &words));
        assert_eq!(s.score_pairs(&pair("synth:cat tree", "boat horse")).unwrap()[0], 0.0);
    }

    #[test]
    fn replacing_a_supported_word_lowers_similarity() {
        let s = SyntheticScorer::default();
        let words = ["dog", "bench", "blimo", "on", "a"];
        assert!(collision_free(&s, &words));
        let before = s.score_pairs(&pair("synth:dog bench", "a dog on a bench")).unwrap()[0];
        let after = s.score_pairs(&pair("synth:dog bench", "a blimo on a bench")).unwrap()[0];
        // Bag {a:2, dog, on, bench} vs tags {dog, bench}: 2 / (sqrt 7 * sqrt 2).
        assert!((before - 2.0 / (7f64.sqrt() * 2f64.sqrt())).abs() < 1e-12);
        assert!((after - 1.0 / (7f64.sqrt() * 2f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn embeddings_are_reproducible_and_case_blind() {
        let s = SyntheticScorer::default();
        let a = s.embed_texts(&["cat".into(), "Cat".into()]).unwrap();
        assert_eq!(a[0], a[1]);
        assert_eq!(s.bucket("cat"), (fnv1a64(b"cat") % 256) as usize);
        assert!(s.embed_texts(&[]).unwrap().is_empty());
    }
}
