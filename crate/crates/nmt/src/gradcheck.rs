//! Central-difference verification of the analytic gradients, including the
//! per-type conditioning parameters.

use polagree::attributes::{AttributeSet, AttributeType};
use polagree::conditioning::{condition, ConditioningMode, Phase};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bpe::{reserved_tag_vocab, RESERVED};
use crate::graph::Graph;
use crate::model::{Model, ModelConfig, Sample, EMBEDDING, TYPE_BIAS, TYPE_VECTORS};

/// Gradients smaller than this in both estimates count as agreeing.
pub const ABS_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub mode: String,
    pub max_rel_error: f64,
    /// Parameter holding the worst element.
    pub worst: String,
    pub elements: usize,
    /// Present types whose conditioning parameters got a zero gradient.
    pub dead_types: Vec<String>,
}

/// One layer, d_model 16, no dropout.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        layers: 1,
        d_model: 16,
        heads: 2,
        ff_dim: 24,
        vocab_size: RESERVED + 10,
        max_len: 16,
        dropout: 0.0,
        seed: 3,
    }
}

/// Attribute sets that between them present every type.
pub fn covering_sets() -> Vec<AttributeSet> {
    ["sp:feminine", "sp:masculine,il:feminine,plural,formal", "il:mixed,plural,informal", "il:masculine,singular,formal"]
        .iter()
        .map(|s| AttributeSet::parse_list(s).expect("legal set"))
        .collect()
}

/// A tiny model with conditioning parameters drawn at a scale where their
/// gradients are well above round-off.
pub fn tiny_model(config: &ModelConfig) -> Model<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut m = Model::new(config.clone(), &mut rng).expect("valid tiny config");
    let tags: Vec<u32> = (4..RESERVED as u32).collect();
    m.reinit_conditioning(&tags, true, 0.5, &mut rng);
    m
}

pub fn sample_batch(model: &Model<f64>, mode: ConditioningMode, seed: u64) -> Vec<Sample<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = model.config.vocab_size as u32;
    let table = model.type_table();
    let tags = reserved_tag_vocab();
    covering_sets()
        .iter()
        .chain(std::iter::once(&AttributeSet::EMPTY))
        .map(|attrs| {
            let src: Vec<u32> = (0..rng.gen_range(2..5)).map(|_| rng.gen_range(RESERVED as u32..v)).collect();
            let target: Vec<u32> = (0..rng.gen_range(1..4)).map(|_| rng.gen_range(RESERVED as u32..v)).collect();
            Sample {
                input: condition(mode, attrs, &src, &table, &tags, Phase::Infer, 0),
                target,
            }
        })
        .collect()
}

pub fn loss_value(model: &Model<f64>, batch: &[Sample<f64>], smoothing: f64) -> f64 {
    let mut g = Graph::new(&model.params, false);
    let mut rng = rand::rngs::mock::StepRng::new(0, 0);
    let l = model.loss(&mut g, batch, smoothing, &mut rng);
    g.scalar(l)
}

pub fn analytic(model: &Model<f64>, batch: &[Sample<f64>], smoothing: f64) -> Vec<Vec<f64>> {
    let mut grads = model.params.zeros_like();
    let mut g = Graph::new(&model.params, false);
    let mut rng = rand::rngs::mock::StepRng::new(0, 0);
    let l = model.loss(&mut g, batch, smoothing, &mut rng);
    g.backward(l, &mut grads);
    grads
}

/// `|a - n| / max(|a|, |n|)`, zero when both are below [`ABS_FLOOR`].
pub fn relative_error(a: f64, n: f64) -> f64 {
    let scale = a.abs().max(n.abs());
    if scale < ABS_FLOOR {
        0.0
    } else {
        (a - n).abs() / scale
    }
}

/// Compares every parameter element against central differences; returns
/// the worst relative error and the parameter it occurred in.
pub fn grad_check(model: &Model<f64>, batch: &[Sample<f64>], epsilon: f64) -> (f64, String, usize) {
    let grads = analytic(model, batch, 0.1);
    let mut m = model.clone();
    let mut worst = (0.0, String::new());
    let mut elements = 0;
    for p in 0..m.params.len() {
        for i in 0..m.params.values[p].len() {
            let x = m.params.values[p][i];
            m.params.values[p][i] = x + epsilon;
            let up = loss_value(&m, batch, 0.1);
            m.params.values[p][i] = x - epsilon;
            let down = loss_value(&m, batch, 0.1);
            m.params.values[p][i] = x;
            let numeric = (up - down) / (2.0 * epsilon);
            let e = relative_error(grads[p][i], numeric);
            if e > worst.0 {
                worst = (e, m.params.names[p].clone());
            }
            elements += 1;
        }
    }
    (worst.0, worst.1, elements)
}

/// The rows through which `mode` conditions on type `t`.
fn type_gradient_norm(model: &Model<f64>, grads: &[Vec<f64>], mode: ConditioningMode, t: AttributeType) -> f64 {
    let d = model.config.d_model;
    let v = model.config.vocab_size;
    let row = |name: &str, r: usize, w: usize| -> f64 {
        let id = model.params.id(name).unwrap();
        grads[id][r * w..(r + 1) * w].iter().map(|x| x * x).sum::<f64>()
    };
    let mut n = 0.0;
    if mode.uses_tags() {
        let tags = reserved_tag_vocab();
        n += row(EMBEDDING, tags.id(t) as usize, d);
    }
    if mode.uses_table() {
        n += if mode == ConditioningMode::OutBias {
            row(TYPE_BIAS, t.index(), v)
        } else {
            row(TYPE_VECTORS, t.index(), d)
        };
    }
    n.sqrt()
}

/// Runs the check for every mode on the tiny model.
pub fn check_all_modes(epsilon: f64, seed: u64) -> Vec<GradCheckReport> {
    let config = tiny_config();
    let model = tiny_model(&config);
    ConditioningMode::ALL
        .iter()
        .map(|&mode| {
            let batch = sample_batch(&model, mode, seed);
            let (max_rel_error, worst, elements) = grad_check(&model, &batch, epsilon);
            let grads = analytic(&model, &batch, 0.1);
            let mut present: Vec<AttributeType> = covering_sets().iter().flat_map(|a| a.types()).collect();
            present.sort();
            present.dedup();
            let dead_types = if mode == ConditioningMode::Baseline {
                Vec::new()
            } else {
                present
                    .into_iter()
                    .filter(|&t| type_gradient_norm(&model, &grads, mode, t) == 0.0)
                    .map(|t| t.tag().to_string())
                    .collect()
            };
            GradCheckReport {
                mode: mode.name().to_string(),
                max_rel_error,
                worst,
                elements,
                dead_types,
            }
        })
        .collect()
}
