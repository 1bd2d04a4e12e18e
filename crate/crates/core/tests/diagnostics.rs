mod common;

use cpi_core::diagnostics::{
    control_comparison, pearson, realword_control, spearman, textonly_displacement, ControlMode, DiagError,
};
use cpi_core::lexicon::{CategoryLexicon, ExclusionLexicon};
use cpi_core::nonce::{profile, NonceForge};
use cpi_core::pipeline::Sample;
use cpi_core::scoring::SyntheticScorer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn textbook_pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let vx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let vy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn brute_ranks(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .map(|x| {
            let below = xs.iter().filter(|y| *y < x).count() as f64;
            let equal = xs.iter().filter(|y| *y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

#[test]
fn pearson_matches_definition_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let xs: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
    let ys: Vec<f64> = xs.iter().map(|x| x * 0.3 + rng.random::<f64>()).collect();
    assert!((pearson(&xs, &ys).unwrap() - textbook_pearson(&xs, &ys)).abs() < 1e-12);
}

#[test]
fn spearman_matches_explicit_average_ranks_with_ties() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let xs: Vec<f64> = (0..400).map(|_| rng.random_range(0..20) as f64).collect();
    let ys: Vec<f64> = (0..400).map(|_| rng.random_range(0..7) as f64).collect();
    let oracle = textbook_pearson(&brute_ranks(&xs), &brute_ranks(&ys));
    assert!((spearman(&xs, &ys).unwrap() - oracle).abs() < 1e-12);
    let exp: Vec<f64> = xs.iter().map(|x| x.exp()).collect();
    assert_eq!(spearman(&exp, &ys).unwrap(), spearman(&xs, &ys).unwrap());
}

#[test]
fn displacement_matches_bag_geometry() {
    // "cat tree boat horse" with "horse" replaced by "blimo": bags share 3 of
    // 4 unit entries, so cosine is 3/4 (all five words are collision-free).
    let s = SyntheticScorer::default();
    let words = ["cat", "tree", "boat", "horse", "blimo"];
    let mut buckets: Vec<usize> = words.iter().map(|w| s.bucket(w)).collect();
    buckets.sort_unstable();
    buckets.dedup();
    assert_eq!(buckets.len(), 5);
    let d = textonly_displacement(&s, &[("cat tree boat horse".into(), "cat tree boat blimo".into())]).unwrap();
    assert!((d[0] - 0.25).abs() < 1e-12);
}

#[test]
fn realword_controls_respect_constraints() {
    let vocab = common::vocab();
    let lex = CategoryLexicon::bundled();
    for (word, seed) in [("dog", 1u64), ("dogs", 2), ("horse", 3), ("Cat", 4)] {
        let same = realword_control(word, ControlMode::SameCategory, seed, vocab, lex).unwrap();
        assert_ne!(same.to_lowercase(), word.to_lowercase());
        assert_eq!(vocab.count_subtokens(&same).unwrap(), vocab.count_subtokens(word).unwrap());
        assert_eq!(profile(&same).unwrap(), profile(word).unwrap());
        let base = cpi_core::nonce::stem(&same).unwrap().to_lowercase();
        assert_eq!(lex.category(&base), Some("animal"), "{same}");
        let cross = realword_control(word, ControlMode::CrossCategory, seed, vocab, lex).unwrap();
        let base = cpi_core::nonce::stem(&cross).unwrap().to_lowercase();
        assert_ne!(lex.category(&base), Some("animal"), "{cross}");
        assert_eq!(realword_control(word, ControlMode::SameCategory, seed, vocab, lex).unwrap(), same);
    }
    assert_eq!(realword_control("blimo", ControlMode::SameCategory, 1, vocab, lex), None);
}

#[test]
fn controls_need_enough_pairs() {
    let forge = NonceForge::new(common::vocab(), ExclusionLexicon::bundled());
    let s = Sample {
        id: "a".into(),
        image: "synth:dog".into(),
        caption: "a dog on a bench".into(),
        alignment: None,
        spans: None,
    };
    let samples = [(&s, "a dog on a bench")];
    let err = control_comparison(&samples, 0, &SyntheticScorer::default(), &forge, CategoryLexicon::bundled(), 8, "");
    assert!(matches!(err, Err(DiagError::InsufficientPairs { .. })));
    let err = control_comparison(&samples, 500, &SyntheticScorer::default(), &forge, CategoryLexicon::bundled(), 8, "");
    assert!(matches!(err, Err(DiagError::InsufficientPairs { found: 1, .. }) | Err(DiagError::InsufficientPairs { found: 2, .. })));
}
