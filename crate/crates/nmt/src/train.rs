//! Pretraining and fine-tuning loops.

use polagree::attributes::AttributeType;
use polagree::conditioning::{condition, ConditionedInput, ConditioningMode, Phase, NULL_TAG};
use polagree::corpus::{mask_for_epoch, AnnotatedPair};
use polagree::detector::Detector;
use polagree::metrics::{agree, chrf, TypedHypothesis};
use polagree::AttributeSet;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bpe::{Bpe, BpeError, EOS, FIRST_TAG, NULL};
use crate::checkpoint::Checkpoint;
use crate::decode::greedy;
use crate::graph::{Graph, Params};
use crate::model::{Model, ModelConfig, ModelError, Sample};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("loss diverged at step {step}: {loss}")]
    Diverged { step: u64, loss: f64 },
    #[error("empty training or dev set")]
    Empty,
    #[error("checkpoint vocabulary lacks the conditioning tokens for {0}")]
    ModeVocabulary(String),
    #[error(transparent)]
    Bpe(#[from] BpeError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Sentences per batch.
    pub batch_size: usize,
    pub lr_factor: f64,
    pub warmup: u64,
    pub epochs: usize,
    pub patience: usize,
    pub label_smoothing: f64,
    /// Global gradient-norm ceiling; 0 disables clipping.
    pub clip_norm: f64,
    pub validations_per_epoch: usize,
    /// Dev sentences translated per validation; `None` uses all.
    pub dev_limit: Option<usize>,
    pub seed: u64,
    pub max_steps: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            lr_factor: 1.0,
            warmup: 400,
            epochs: 10,
            patience: 5,
            label_smoothing: 0.1,
            clip_norm: 1.0,
            validations_per_epoch: 2,
            dev_limit: None,
            seed: 1,
            max_steps: None,
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: &Params<T>) -> Self {
        Adam {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-9,
        }
    }

    pub fn update(&mut self, params: &mut Params<T>, grads: &[Vec<T>], lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (T::c(self.beta1), T::c(self.beta2));
        let (one, eps) = (T::one(), T::c(self.eps));
        let step = T::c(lr / c1);
        let c2 = T::c(c2);
        for (p, g) in grads.iter().enumerate() {
            let (m, v, w) = (&mut self.m[p], &mut self.v[p], &mut params.values[p]);
            for i in 0..g.len() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                w[i] = w[i] - step * m[i] / ((v[i] / c2).sqrt() + eps);
            }
        }
    }
}

/// Inverse square-root schedule with linear warmup.
pub fn noam(step: u64, d_model: usize, warmup: u64, factor: f64) -> f64 {
    let s = step.max(1) as f64;
    factor * (d_model as f64).powf(-0.5) * s.powf(-0.5).min(s * (warmup.max(1) as f64).powf(-1.5))
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: u64,
    pub epoch: f64,
    /// Mean training loss since the previous row.
    pub loss: f64,
    pub dev_chrf: f64,
    pub dev_agree: Option<f64>,
    /// Best dev chrF so far, this row included.
    pub best_chrf: f64,
}

pub fn log_tsv(rows: &[LogRow]) -> String {
    let mut s = String::from("step\tloss\tdev_chrf\tdev_agree\n");
    for r in rows {
        let agree = r.dev_agree.map_or("NA".to_string(), |a| format!("{a:.4}"));
        s.push_str(&format!("{}\t{:.6}\t{:.4}\t{}\n", r.step, r.loss, r.dev_chrf, agree));
    }
    s
}

fn global_norm<T: Scalar>(grads: &[Vec<T>]) -> f64 {
    grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|x| {
            let x = x.to_f64().unwrap();
            x * x
        })
        .sum::<f64>()
        .sqrt()
}

/// One optimisation step; returns the batch loss.
pub fn train_step(
    model: &mut Model<f32>,
    adam: &mut Adam<f32>,
    batch: &[Sample<f32>],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<f64, TrainError> {
    let mut grads = model.params.zeros_like();
    let loss = {
        let mut g = Graph::new(&model.params, true);
        let l = model.loss(&mut g, batch, cfg.label_smoothing, rng);
        g.backward(l, &mut grads);
        g.scalar(l) as f64
    };
    if !loss.is_finite() {
        return Err(TrainError::Diverged { step: adam.step + 1, loss });
    }
    if cfg.clip_norm > 0.0 {
        let n = global_norm(&grads);
        if n > cfg.clip_norm {
            let s = (cfg.clip_norm / n) as f32;
            grads.iter_mut().flat_map(|g| g.iter_mut()).for_each(|x| *x *= s);
        }
    }
    let lr = noam(adam.step + 1, model.config.d_model, cfg.warmup, cfg.lr_factor);
    adam.update(&mut model.params, &grads, lr);
    Ok(loss)
}

/// Per-example seed for the training-time tag order.
fn example_seed(seed: u64, epoch: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(epoch.wrapping_mul(0x0100_0000_01b3))
        .wrapping_add(index as u64)
}

struct EncodedPair {
    src: Vec<u32>,
    tgt: Vec<u32>,
}

fn encode_pair(bpe: &Bpe, src: &str, tgt: &str) -> EncodedPair {
    let mut s = bpe.encode(src);
    s.push(EOS);
    EncodedPair { src: s, tgt: bpe.encode(tgt) }
}

/// Dev-set scorer: chrF and, for annotated sets, Agree.
struct DevSet<'a> {
    items: Vec<(String, String, AttributeSet)>,
    detector: Option<&'a Detector<'a>>,
}

impl DevSet<'_> {
    fn score(&self, model: &Model<f32>, bpe: &Bpe, mode: ConditioningMode) -> (f64, Option<f64>) {
        let table = model.type_table();
        let tags = bpe.tag_vocab();
        let inputs: Vec<ConditionedInput<f32>> = self
            .items
            .iter()
            .map(|(s, _, a)| {
                let mut ids = bpe.encode(s);
                ids.push(EOS);
                condition(mode, a, &ids, &table, &tags, Phase::Infer, 0)
            })
            .collect();
        let hyps: Vec<String> = greedy(model, &inputs).iter().map(|t| bpe.decode(t)).collect();
        let refs: Vec<&str> = self.items.iter().map(|i| i.1.as_str()).collect();
        let c = chrf(&hyps, &refs).unwrap_or(0.0);
        let a = self.detector.and_then(|d| {
            let typed: Vec<TypedHypothesis> = self
                .items
                .iter()
                .zip(&hyps)
                .flat_map(|((s, _, a), h)| {
                    a.types().into_iter().map(move |t| TypedHypothesis {
                        hypothesis: h.clone(),
                        requested: t,
                        source: s.clone(),
                    })
                })
                .collect();
            agree(&typed, d)
        });
        (c, a)
    }
}

/// Shared epoch loop: validates `validations_per_epoch` times per epoch and
/// keeps the best dev-chrF parameters.
#[allow(clippy::too_many_arguments)]
fn run(
    ckpt: &mut Checkpoint,
    cfg: &TrainConfig,
    n_train: usize,
    dev: &DevSet<'_>,
    mut make_batch: impl FnMut(&Model<f32>, u64, &[usize]) -> Vec<Sample<f32>>,
) -> Result<(), TrainError> {
    if n_train == 0 || dev.items.is_empty() {
        return Err(TrainError::Empty);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7472_6169_6e00);
    let mut best: Option<(f64, Params<f32>, Adam<f32>)> = None;
    let mut stale = 0;
    let mut loss_sum = 0.0;
    let mut loss_n = 0usize;
    let per_val = cfg.validations_per_epoch.max(1);
    'outer: for epoch in 0..cfg.epochs as u64 {
        let mut order: Vec<usize> = (0..n_train).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(epoch)));
        let batches: Vec<&[usize]> = order.chunks(cfg.batch_size.max(1)).collect();
        let nb = batches.len();
        for (bi, idx) in batches.into_iter().enumerate() {
            let samples = make_batch(&ckpt.model, epoch, idx);
            let loss = train_step(&mut ckpt.model, &mut ckpt.adam, &samples, cfg, &mut rng)?;
            loss_sum += loss;
            loss_n += 1;
            let boundary = (bi + 1) * per_val / nb != bi * per_val / nb;
            let out_of_steps = cfg.max_steps.is_some_and(|m| ckpt.adam.step >= m);
            if boundary || out_of_steps {
                let (c, a) = dev.score(&ckpt.model, &ckpt.bpe, ckpt.mode);
                let prev = best.as_ref().map_or(f64::NEG_INFINITY, |b| b.0);
                if c > prev {
                    best = Some((c, ckpt.model.params.clone(), ckpt.adam.clone()));
                    stale = 0;
                } else {
                    stale += 1;
                }
                let row = LogRow {
                    step: ckpt.adam.step,
                    epoch: epoch as f64 + (bi + 1) as f64 / nb as f64,
                    loss: loss_sum / loss_n.max(1) as f64,
                    dev_chrf: c,
                    dev_agree: a,
                    best_chrf: c.max(prev),
                };
                log::info!(
                    "step {} epoch {:.2} loss {:.4} dev chrF {:.2} agree {:?}",
                    row.step,
                    row.epoch,
                    row.loss,
                    c,
                    a
                );
                ckpt.history.push(row);
                loss_sum = 0.0;
                loss_n = 0;
                if stale >= cfg.patience.max(1) || out_of_steps {
                    break 'outer;
                }
            }
        }
    }
    if let Some((_, params, adam)) = best {
        ckpt.model.params = params;
        ckpt.adam = adam;
    }
    Ok(())
}

/// Learns a joint subword model and trains an unconditioned model.
pub fn pretrain(
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    train: &[(String, String)],
    dev: &[(String, String)],
) -> Result<Checkpoint, TrainError> {
    if train.is_empty() {
        return Err(TrainError::Empty);
    }
    let bpe = Bpe::train(train.iter().flat_map(|(s, t)| [s.as_str(), t.as_str()]), model_cfg.vocab_size)?;
    let mut config = model_cfg.clone();
    config.vocab_size = bpe.vocab_size();
    let model = Model::new(config, &mut ChaCha8Rng::seed_from_u64(model_cfg.seed))?;
    let adam = Adam::new(&model.params);
    let mut ckpt = Checkpoint {
        mode: ConditioningMode::Baseline,
        bpe,
        model,
        adam,
        history: Vec::new(),
    };
    let pairs: Vec<EncodedPair> = train.iter().map(|(s, t)| encode_pair(&ckpt.bpe, s, t)).collect();
    let limit = cfg.dev_limit.unwrap_or(dev.len()).min(dev.len());
    let dev = DevSet {
        items: dev[..limit].iter().map(|(s, t)| (s.clone(), t.clone(), AttributeSet::EMPTY)).collect(),
        detector: None,
    };
    run(&mut ckpt, cfg, pairs.len(), &dev, |_, _, idx| {
        idx.iter()
            .map(|&i| Sample {
                input: ConditionedInput::plain(&pairs[i].src),
                target: pairs[i].tgt.clone(),
            })
            .collect()
    })?;
    Ok(ckpt)
}

/// Fine-tunes `base` under one conditioning mode on the masked annotated
/// stream; dev is scored with complete context.
pub fn finetune(
    base: &Checkpoint,
    mode: ConditioningMode,
    cfg: &TrainConfig,
    train: &[AnnotatedPair],
    dev: &[AnnotatedPair],
    detector: &Detector<'_>,
) -> Result<Checkpoint, TrainError> {
    let tags = base.bpe.tag_vocab();
    let tag_atoms_ok = base.bpe.token(NULL) == NULL_TAG
        && AttributeType::ALL.iter().all(|t| base.bpe.token(FIRST_TAG + t.index() as u32) == t.tag());
    if mode.uses_tags() && !tag_atoms_ok {
        return Err(TrainError::ModeVocabulary(mode.name().to_string()));
    }
    let mut ckpt = base.clone();
    ckpt.mode = mode;
    ckpt.history.clear();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x696e_6974);
    let mut rows: Vec<u32> = Vec::new();
    if mode.uses_tags() {
        rows.extend(tags.tags);
        rows.push(tags.null);
    }
    if mode != ConditioningMode::Baseline {
        ckpt.model.reinit_conditioning(&rows, mode.uses_table(), 0.01, &mut rng);
    }
    let encoded: Vec<EncodedPair> = train.iter().map(|p| encode_pair(&ckpt.bpe, &p.src, &p.tgt)).collect();
    let limit = cfg.dev_limit.unwrap_or(dev.len()).min(dev.len());
    let dev = DevSet {
        items: dev[..limit].iter().map(|p| (p.src.clone(), p.tgt.clone(), p.attrs)).collect(),
        detector: Some(detector),
    };
    let mut stream_epoch = u64::MAX;
    let mut presented: Vec<AttributeSet> = Vec::new();
    let seed = cfg.seed;
    let bpe_tags = tags;
    run(&mut ckpt, cfg, encoded.len(), &dev, |model, epoch, idx| {
        if stream_epoch != epoch {
            presented = mask_for_epoch(train, epoch, seed).into_iter().map(|e| e.presented_attrs).collect();
            stream_epoch = epoch;
        }
        let table = model.type_table();
        idx.iter()
            .map(|&i| Sample {
                input: condition(
                    mode,
                    &presented[i],
                    &encoded[i].src,
                    &table,
                    &bpe_tags,
                    Phase::Train,
                    example_seed(seed, epoch, i),
                ),
                target: encoded[i].tgt.clone(),
            })
            .collect()
    })?;
    Ok(ckpt)
}
