use cpi_core::pas::{normalize_records, Aggregator, PasRecord, PoolStats};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn two_pass(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[test]
fn million_values_match_two_pass_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut xs: Vec<f64> = (0..1_000_000).map(|_| 1e3 + rng.random::<f64>() * 0.05).collect();
    let (m, s) = two_pass(&xs);
    let stats = PoolStats::compute(&xs).unwrap();
    assert!(((stats.mean - m) / m).abs() < 1e-9);
    assert!(((stats.std - s) / s).abs() < 1e-9);
    xs.shuffle(&mut rng);
    let shuffled = PoolStats::compute(&xs).unwrap();
    assert!(((shuffled.mean - stats.mean) / stats.mean).abs() <= 1e-12);
    assert!(((shuffled.std - stats.std) / stats.std).abs() <= 1e-12);
}

#[test]
fn z_scores_ignore_affine_rescaling_of_similarities() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let samples: Vec<(f64, Vec<f64>)> = (0..500)
        .map(|_| {
            let base = rng.random::<f64>();
            let k = rng.random_range(0..4);
            (base, (0..k).map(|_| rng.random::<f64>()).collect())
        })
        .collect();
    let build = |a: f64, b: f64| {
        let mut rs: Vec<PasRecord> = samples
            .iter()
            .enumerate()
            .map(|(i, (base, pert))| {
                let (sb, deltas) = (a * base + b, pert.iter().map(|p| (a * base + b) - (a * p + b)).collect());
                PasRecord::new(format!("s{i}"), sb, deltas, Aggregator::Mean)
            })
            .collect();
        normalize_records(&mut rs).unwrap();
        rs
    };
    let plain = build(1.0, 0.0);
    let scaled = build(3.0, 0.1);
    for (p, s) in plain.iter().zip(&scaled) {
        assert_eq!(p.valid, s.valid);
        if let (Some(x), Some(y)) = (p.score, s.score) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}

#[test]
fn mean_favours_several_supported_phrases() {
    // Two samples with the same base score; A loses 0.1 on each of three
    // phrases, B loses 0.1 on one phrase and nothing on two others.
    let a = PasRecord::new("a".into(), 0.6, vec![0.1, 0.1, 0.1], Aggregator::Mean);
    let b = PasRecord::new("b".into(), 0.6, vec![0.1, 0.0, 0.0], Aggregator::Mean);
    assert!(a.mu.unwrap() > b.mu.unwrap());
}
