mod common;

use cpi_core::bpe::{load_vocab, normalize, read_fixture};

use common::{repo_root, vocab};

#[test]
fn reference_vocab_has_49408_tokens() {
    let v = vocab();
    assert_eq!(v.size(), 49408);
    assert_eq!(v.start_id(), 49406);
    assert_eq!(v.end_id(), 49407);
    for (a, b) in v.merges() {
        assert!(v.token_id(&format!("{a}{b}")).is_some());
    }
}

#[test]
fn loading_twice_is_deterministic() {
    let path = repo_root().join("assets/bpe_simple_vocab_16e6.txt.gz");
    assert_eq!(load_vocab(&path).unwrap(), load_vocab(&path).unwrap());
}

#[test]
fn fixture_conformance() {
    let rows = read_fixture(repo_root().join("data/fixtures/clip_tokenizer_fixture.tsv")).unwrap();
    assert_eq!(rows.len(), 1000);
    let v = vocab();
    let mismatches: Vec<_> = rows
        .iter()
        .filter(|r| v.encode(&r.text, false).ids != r.ids)
        .map(|r| (r.text.clone(), normalize(&r.text), v.encode(&r.text, false).ids, r.ids.clone()))
        .collect();
    assert!(mismatches.is_empty(), "{} mismatches: {:#?}", mismatches.len(), &mismatches[..mismatches.len().min(5)]);
}

#[test]
fn photo_of_a_cat() {
    let v = vocab();
    assert_eq!(v.encode("a photo of a cat", false).ids, vec![320, 1125, 539, 320, 2368]);
    assert_eq!(v.encode("a photo of a cat", true).ids, vec![49406, 320, 1125, 539, 320, 2368, 49407]);
    assert!(v.encode("", false).ids.is_empty());
    assert_eq!(v.count_subtokens("cat").unwrap(), 1);
    assert_eq!(v.token_id("cat</w>"), Some(2368));
}

fn word_pool() -> Vec<String> {
    let text = std::fs::read_to_string(repo_root().join("crates/core/assets/lexicon/exclusion.txt")).unwrap();
    text.lines().filter(|l| !l.starts_with('#')).step_by(5).map(str::to_string).collect()
}

#[test]
fn equal_count_substitutions_preserve_caption_length() {
    use cpi_core::phrase::segment;
    use rand::{Rng, SeedableRng};
    use std::collections::HashMap;

    let v = vocab();
    let mut by_count: HashMap<usize, Vec<String>> = HashMap::new();
    for w in word_pool() {
        by_count.entry(v.count_subtokens(&w).unwrap()).or_default().push(w);
    }
    let captions: Vec<String> = std::fs::read_to_string(repo_root().join("data/realistic_captions.txt"))
        .unwrap()
        .lines()
        .map(normalize)
        .collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    while checked < 10_000 {
        let caption = &captions[rng.random_range(0..captions.len())];
        let words: Vec<(usize, usize)> = segment(caption)
            .into_iter()
            .filter(|&(s, e)| caption[s..e].chars().all(|c| c.is_ascii_alphabetic()))
            .collect();
        let (s, e) = words[rng.random_range(0..words.len())];
        let n = v.count_subtokens(&caption[s..e]).unwrap();
        let Some(pool) = by_count.get(&n) else { continue };
        let r = &pool[rng.random_range(0..pool.len())];
        let perturbed = format!("{}{}{}", &caption[..s], r, &caption[e..]);
        assert_eq!(
            v.encode_normalized(&perturbed, false).len(),
            v.encode_normalized(caption, false).len(),
            "{caption:?} -> {perturbed:?}"
        );
        checked += 1;
    }
}

#[test]
fn repeated_word_adds_its_count() {
    let v = vocab();
    for w in word_pool().iter().take(500) {
        let once = v.encode(&format!("a {w} here"), false).len();
        let twice = v.encode(&format!("a {w} {w} here"), false).len();
        assert_eq!(twice - once, v.count_subtokens(w).unwrap(), "{w}");
    }
}
