mod common;

use polagree::conditioning::ConditioningMode;
use polagree_nmt::model::{TYPE_BIAS, TYPE_VECTORS};
use polagree_nmt::train::log_tsv;
use polagree_nmt::{finetune, pretrain, Checkpoint, ModelConfig, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn copy_pairs(n: usize, seed: u64) -> Vec<(String, String)> {
    let words = ["ala", "ma", "kota", "pies", "dom", "las", "oko", "rak", "sok", "mur"];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let s: Vec<&str> = (0..rng.gen_range(2..6)).map(|_| words[rng.gen_range(0..words.len())]).collect();
            let s = s.join(" ");
            (s.clone(), s)
        })
        .collect()
}

fn copy_config() -> ModelConfig {
    ModelConfig {
        layers: 1,
        d_model: 32,
        heads: 2,
        ff_dim: 64,
        vocab_size: 60,
        max_len: 16,
        dropout: 0.0,
        seed: 2,
    }
}

#[test]
fn copy_task_is_learned() {
    let train = copy_pairs(100, 1);
    let cfg = TrainConfig {
        epochs: 50,
        batch_size: 10,
        warmup: 100,
        lr_factor: 1.0,
        patience: 100,
        label_smoothing: 0.0,
        ..Default::default()
    };
    let ckpt = pretrain(&copy_config(), &cfg, &train, &train[..30]).unwrap();
    let best = ckpt.best_dev_chrf().unwrap();
    assert!(best >= 99.0, "{}", log_tsv(&ckpt.history));
}

#[test]
fn frozen_parameters_stop_after_two_validations() {
    let train = copy_pairs(40, 2);
    let cfg = TrainConfig {
        epochs: 10,
        batch_size: 8,
        lr_factor: 0.0,
        patience: 1,
        ..Default::default()
    };
    let ckpt = pretrain(&copy_config(), &cfg, &train, &train[..10]).unwrap();
    assert_eq!(ckpt.history.len(), 2);
    assert_eq!(ckpt.history[0].dev_chrf, ckpt.history[1].dev_chrf);
}

#[test]
fn pretraining_is_deterministic() {
    let train = copy_pairs(60, 3);
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 8,
        ..Default::default()
    };
    let a = pretrain(&copy_config(), &cfg, &train, &train[..10]).unwrap();
    let b = pretrain(&copy_config(), &cfg, &train, &train[..10]).unwrap();
    assert_eq!(log_tsv(&a.history), log_tsv(&b.history));
    assert_eq!(a.to_bytes(), b.to_bytes());
}

#[test]
fn best_chrf_is_monotone_and_log_is_tsv() {
    let (base, _) = common::base();
    let rows = &base.history;
    assert!(rows.windows(2).all(|w| w[1].best_chrf >= w[0].best_chrf));
    let tsv = log_tsv(rows);
    assert!(tsv.starts_with("step\tloss\tdev_chrf\tdev_agree\n"));
    assert_eq!(tsv.lines().count(), rows.len() + 1);
}

#[test]
fn checkpoint_round_trips_bit_exactly() {
    let (base, _) = common::base();
    let bytes = base.to_bytes();
    let back = Checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(&back, base);
    assert_eq!(back.to_bytes(), bytes);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("base.ckpt");
    base.save(&path).unwrap();
    assert_eq!(&Checkpoint::load(&path).unwrap(), base);
    assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    assert!(Checkpoint::from_bytes(b"not a checkpoint").is_err());
}

fn ft_config() -> TrainConfig {
    TrainConfig {
        epochs: 2,
        batch_size: 32,
        warmup: 100,
        dev_limit: Some(40),
        ..Default::default()
    }
}

#[test]
fn baseline_finetune_leaves_type_table_untouched() {
    let (base, split) = common::base();
    let det = common::detector();
    let cfg = TrainConfig { max_steps: Some(base.adam.step + 20), ..ft_config() };
    let ft = finetune(base, ConditioningMode::Baseline, &cfg, &split.remainder, &split.dev, &det).unwrap();
    for name in [TYPE_VECTORS, TYPE_BIAS] {
        assert_eq!(ft.model.params.get(name), base.model.params.get(name));
    }
    assert_ne!(ft.model.params.get("emb"), base.model.params.get("emb"));
}

#[test]
fn tag_finetune_raises_dev_agree_and_is_deterministic() {
    let (base, split) = common::base();
    let det = common::detector();
    let cfg = ft_config();
    let ft = finetune(base, ConditioningMode::TagEnc, &cfg, &split.remainder, &split.dev, &det).unwrap();
    let best = ft
        .history
        .iter()
        .find(|r| r.dev_chrf == r.best_chrf && r.best_chrf == ft.history.last().unwrap().best_chrf)
        .unwrap();
    let base_agree = {
        let b = finetune(base, ConditioningMode::TagEnc, &TrainConfig { lr_factor: 0.0, epochs: 1, ..cfg.clone() }, &split.remainder, &split.dev, &det).unwrap();
        b.history[0].dev_agree.unwrap()
    };
    assert!(best.dev_agree.unwrap() > base_agree, "{} vs {base_agree}\n{}", best.dev_agree.unwrap(), log_tsv(&ft.history));
    let again = finetune(base, ConditioningMode::TagEnc, &cfg, &split.remainder, &split.dev, &det).unwrap();
    assert_eq!(again.to_bytes(), ft.to_bytes());
}

#[test]
fn divergence_aborts() {
    let train = copy_pairs(40, 4);
    let cfg = TrainConfig {
        epochs: 5,
        batch_size: 8,
        lr_factor: 1e30,
        warmup: 1,
        clip_norm: 0.0,
        ..Default::default()
    };
    match pretrain(&copy_config(), &cfg, &train, &train[..5]) {
        Err(polagree_nmt::train::TrainError::Diverged { step, loss }) => assert!(step > 1 && !loss.is_finite()),
        other => panic!("{:?}", other.map(|c| c.history)),
    }
}
