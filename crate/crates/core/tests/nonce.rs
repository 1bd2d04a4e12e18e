mod common;

use cpi_core::bpe::normalize;
use cpi_core::lexicon::ExclusionLexicon;
use cpi_core::nonce::{profile, stem, NonceForge};
use cpi_core::phrase::{extract_phrases, DEFAULT_MAX_K};

fn realistic() -> Vec<String> {
    let text = std::fs::read_to_string(common::repo_root().join("data/realistic_captions.txt")).unwrap();
    text.lines().map(str::to_string).collect()
}

#[test]
fn realistic_sample_coverage_and_invariants() {
    let vocab = common::vocab();
    let ex = ExclusionLexicon::bundled();
    let forge = NonceForge::new(vocab, ex);
    let (mut covered, mut total, mut valid, mut all) = (0, 0, 0, 0);
    for (i, raw) in realistic().iter().enumerate() {
        let caption = normalize(raw);
        let (tokens, spans) = extract_phrases(&caption, DEFAULT_MAX_K);
        let ivs = forge.intervene(&format!("r{i}"), &caption, &tokens, &spans, "").unwrap();
        total += 1;
        all += ivs.len();
        if ivs.iter().any(|iv| iv.is_valid()) {
            covered += 1;
        }
        let base_len = vocab.encode_normalized(&caption, false).len();
        for iv in ivs.iter().filter(|iv| iv.is_valid()) {
            valid += 1;
            let r = iv.replacement.as_deref().unwrap();
            let pert = iv.perturbed_caption.as_deref().unwrap();
            assert_eq!(vocab.encode_normalized(pert, false).len(), base_len, "{caption} -> {pert}");
            assert_eq!(profile(r).unwrap(), profile(&iv.word).unwrap());
            assert_eq!(vocab.count_subtokens(r).unwrap(), vocab.count_subtokens(&iv.word).unwrap());
            assert!(!ex.contains(stem(r).unwrap()) && !ex.contains(r));
        }
    }
    let coverage = covered as f64 / total as f64;
    eprintln!("coverage {coverage:.4} ({covered}/{total}), valid interventions {valid}/{all}");
    assert!(coverage >= 0.98);
}


#[test]
fn forge_is_deterministic_and_tokenizer_checked() {
    let vocab = common::vocab();
    let forge = NonceForge::new(vocab, ExclusionLexicon::bundled());
    for (i, word) in ["dog", "Cats", "bench's", "skateboarding", "SURFBOARDS", "umbrella"].iter().enumerate() {
        let seed = cpi_core::nonce::seed_for("s", i, word, "");
        let a = forge.forge(word, seed, &[]).unwrap();
        assert_eq!(a, forge.forge(word, seed, &[]).unwrap());
        let r = a.nonce().unwrap_or_else(|| panic!("no nonce for {word}"));
        assert_eq!(vocab.count_subtokens(r).unwrap(), vocab.count_subtokens(word).unwrap(), "{word} -> {r}");
        assert_eq!(
            vocab.count_subtokens(stem(r).unwrap()).unwrap(),
            vocab.count_subtokens(stem(word).unwrap()).unwrap(),
            "{word} -> {r}"
        );
        assert_eq!(profile(r).unwrap(), profile(word).unwrap());
    }
}
