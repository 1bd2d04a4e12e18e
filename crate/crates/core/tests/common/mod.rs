#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::OnceLock;

use cpi_core::bpe::{load_vocab, Vocab};

pub fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn vocab() -> &'static Vocab {
    static VOCAB: OnceLock<Vocab> = OnceLock::new();
    VOCAB.get_or_init(|| load_vocab(repo_root().join("assets/bpe_simple_vocab_16e6.txt.gz")).expect("reference vocab"))
}
