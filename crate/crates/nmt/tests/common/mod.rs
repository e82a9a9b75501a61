#![allow(dead_code)]

use polagree::corpus::{balanced_split, AnnotatedPair, Split};
use polagree::detector::Detector;
use polagree::morpho::Lexicon;
use polagree::synth::{Grammar, GroupWeights};
use polagree_nmt::{pretrain, Checkpoint, ModelConfig, TrainConfig};

pub fn small_config() -> ModelConfig {
    ModelConfig {
        layers: 1,
        d_model: 32,
        heads: 2,
        ff_dim: 64,
        vocab_size: 400,
        max_len: 32,
        dropout: 0.1,
        seed: 5,
    }
}

pub fn lexicon() -> &'static Lexicon {
    static LEX: std::sync::OnceLock<Lexicon> = std::sync::OnceLock::new();
    LEX.get_or_init(Lexicon::builtin)
}

pub fn detector() -> Detector<'static> {
    Detector::new(lexicon())
}

pub fn corpus(n: usize, seed: u64) -> Split {
    let det = detector();
    let g = Grammar::builtin(&det).unwrap();
    let pairs = g.generate(n, &GroupWeights::Uniform, seed).unwrap();
    balanced_split(&pairs, 5, seed).unwrap()
}

pub fn plain(pairs: &[AnnotatedPair]) -> Vec<(String, String)> {
    pairs.iter().map(|p| (p.src.clone(), p.tgt.clone())).collect()
}

/// A briefly pretrained small model and its data, shared across tests.
pub fn base() -> &'static (Checkpoint, Split) {
    static BASE: std::sync::OnceLock<(Checkpoint, Split)> = std::sync::OnceLock::new();
    BASE.get_or_init(|| {
        let split = corpus(3000, 2);
        let cfg = TrainConfig {
            epochs: 8,
            batch_size: 32,
            warmup: 100,
            dev_limit: Some(40),
            ..Default::default()
        };
        let ckpt = pretrain(&small_config(), &cfg, &plain(&split.remainder), &plain(&split.dev)).unwrap();
        (ckpt, split)
    })
}
