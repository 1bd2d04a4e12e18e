//! Shared inputs for the criterion benches: the reference vocabulary and
//! the bundled demo corpus, resolved relative to the workspace root.

use std::path::PathBuf;

use cpi_core::bpe::{load_vocab, Vocab};
use cpi_core::pipeline::{read_corpus, Corpus};

pub fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn reference_vocab() -> Vocab {
    load_vocab(workspace_root().join("assets/bpe_simple_vocab_16e6.txt.gz")).expect("reference vocab")
}

pub fn demo_corpus() -> Corpus {
    read_corpus(workspace_root().join("data/demo_corpus.jsonl")).expect("demo corpus")
}

/// The first `n` lines of the realistic caption sample.
pub fn realistic_captions(n: usize) -> Vec<String> {
    std::fs::read_to_string(workspace_root().join("data/realistic_captions.txt"))
        .expect("realistic captions")
        .lines()
        .take(n)
        .map(str::to_string)
        .collect()
}
