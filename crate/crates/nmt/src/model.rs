//! Pre-norm Transformer encoder-decoder with tied embeddings.

use polagree::attributes::AttributeType;
use polagree::conditioning::{AdditivePlacement, ConditionedInput, TypeEmbeddingTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bpe::{EOS, PAD, SOS};
use crate::graph::{AttnSpec, Graph, NodeId, Params, NONE};
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("d_model {d_model} is not divisible by {heads} heads")]
    Heads { d_model: usize, heads: usize },
    #[error("invalid config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub layers: usize,
    pub d_model: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub vocab_size: usize,
    pub max_len: usize,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            layers: 2,
            d_model: 64,
            heads: 4,
            ff_dim: 256,
            vocab_size: 1000,
            max_len: 64,
            dropout: 0.1,
            seed: 1,
        }
    }
}

impl ModelConfig {
    /// Six layers, 512 wide, 16K joint vocabulary.
    pub fn paper_scale() -> Self {
        ModelConfig {
            layers: 6,
            d_model: 512,
            heads: 8,
            ff_dim: 2048,
            vocab_size: 16_000,
            max_len: 100,
            dropout: 0.1,
            seed: 1,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.heads == 0 || self.d_model % self.heads != 0 {
            return Err(ModelError::Heads {
                d_model: self.d_model,
                heads: self.heads,
            });
        }
        if self.layers == 0 || self.ff_dim == 0 || self.max_len < 2 {
            return Err(ModelError::Config(format!("{self:?}")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::Config(format!("dropout {}", self.dropout)));
        }
        Ok(())
    }
}

/// One training example after conditioning: `target` excludes `<eos>`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    pub input: ConditionedInput<T>,
    pub target: Vec<u32>,
}

pub const TYPE_VECTORS: &str = "type.vectors";
pub const TYPE_BIAS: &str = "type.bias";
pub const EMBEDDING: &str = "emb";

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub params: Params<T>,
    positions: Vec<T>,
}

fn sinusoids<T: Scalar>(max_len: usize, d: usize) -> Vec<T> {
    let mut out = vec![T::zero(); max_len * d];
    for p in 0..max_len {
        for i in 0..d / 2 {
            let freq = (10_000f64).powf(-2.0 * i as f64 / d as f64);
            out[p * d + 2 * i] = T::c((p as f64 * freq).sin());
            out[p * d + 2 * i + 1] = T::c((p as f64 * freq).cos());
        }
    }
    out
}

fn uniform<T: Scalar>(n: usize, limit: f64, rng: &mut impl Rng) -> Vec<T> {
    (0..n).map(|_| T::c(rng.gen_range(-limit..limit))).collect()
}

/// Cached encoder output of one batch.
#[derive(Debug, Clone)]
pub struct Memory<T> {
    pub values: Vec<T>,
    pub len: usize,
    pub valid: Vec<bool>,
}

fn type_sets<T>(inputs: &[&ConditionedInput<T>]) -> Vec<Vec<u32>> {
    inputs
        .iter()
        .map(|c| c.types.iter().map(|t| t.index() as u32).collect())
        .collect()
}

impl<T: Scalar> Model<T> {
    pub fn new(config: ModelConfig, rng: &mut impl Rng) -> Result<Self, ModelError> {
        config.validate()?;
        let d = config.d_model;
        let v = config.vocab_size;
        let f = config.ff_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(rng.gen());
        let mut p = Params::new();
        let xavier = |fi: usize, fo: usize| (6.0 / (fi + fo) as f64).sqrt();
        p.add(EMBEDDING, v, d, uniform(v * d, (3.0 / d as f64).sqrt(), &mut rng));
        let ln = |p: &mut Params<T>, name: &str| {
            p.add(&format!("{name}.g"), 1, d, vec![T::one(); d]);
            p.add(&format!("{name}.b"), 1, d, vec![T::zero(); d]);
        };
        let attn = |p: &mut Params<T>, name: &str, rng: &mut ChaCha8Rng| {
            for w in ["q", "k", "v", "o"] {
                p.add(&format!("{name}.w{w}"), d, d, uniform(d * d, xavier(d, d), rng));
                p.add(&format!("{name}.b{w}"), 1, d, vec![T::zero(); d]);
            }
        };
        let ff = |p: &mut Params<T>, name: &str, rng: &mut ChaCha8Rng| {
            p.add(&format!("{name}.w1"), d, f, uniform(d * f, xavier(d, f), rng));
            p.add(&format!("{name}.b1"), 1, f, vec![T::zero(); f]);
            p.add(&format!("{name}.w2"), f, d, uniform(d * f, xavier(d, f), rng));
            p.add(&format!("{name}.b2"), 1, d, vec![T::zero(); d]);
        };
        for l in 0..config.layers {
            ln(&mut p, &format!("enc.{l}.ln1"));
            attn(&mut p, &format!("enc.{l}.self"), &mut rng);
            ln(&mut p, &format!("enc.{l}.ln2"));
            ff(&mut p, &format!("enc.{l}.ff"), &mut rng);
        }
        ln(&mut p, "enc.ln");
        for l in 0..config.layers {
            ln(&mut p, &format!("dec.{l}.ln1"));
            attn(&mut p, &format!("dec.{l}.self"), &mut rng);
            ln(&mut p, &format!("dec.{l}.ln2"));
            attn(&mut p, &format!("dec.{l}.cross"), &mut rng);
            ln(&mut p, &format!("dec.{l}.ln3"));
            ff(&mut p, &format!("dec.{l}.ff"), &mut rng);
        }
        ln(&mut p, "dec.ln");
        let n = AttributeType::COUNT;
        p.add(TYPE_VECTORS, n, d, uniform(n * d, 0.01, &mut rng));
        p.add(TYPE_BIAS, n, v, uniform(n * v, 0.01, &mut rng));
        Ok(Self::from_params(config, p))
    }

    pub fn from_params(config: ModelConfig, params: Params<T>) -> Self {
        let positions = sinusoids(config.max_len, config.d_model);
        Model { config, params, positions }
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model::from_params(self.config.clone(), self.params.cast())
    }

    /// Snapshot of the per-type parameters.
    pub fn type_table(&self) -> TypeEmbeddingTable<T> {
        TypeEmbeddingTable {
            d_model: self.config.d_model,
            vocab_size: self.config.vocab_size,
            type_vectors: self.params.get(TYPE_VECTORS).to_vec(),
            bias_rows: self.params.get(TYPE_BIAS).to_vec(),
        }
    }

    /// Redraws the per-type parameters and the given embedding rows
    /// uniformly in ±`limit`.
    pub fn reinit_conditioning(&mut self, tag_rows: &[u32], table: bool, limit: f64, rng: &mut impl Rng) {
        let d = self.config.d_model;
        let e = self.params.id(EMBEDDING).unwrap();
        for &r in tag_rows {
            let r = r as usize;
            for x in &mut self.params.values[e][r * d..(r + 1) * d] {
                *x = T::c(rng.gen_range(-limit..limit));
            }
        }
        if table {
            for name in [TYPE_VECTORS, TYPE_BIAS] {
                let id = self.params.id(name).unwrap();
                for x in &mut self.params.values[id] {
                    *x = T::c(rng.gen_range(-limit..limit));
                }
            }
        }
    }

    fn position_rows(&self, lens: &[usize], width: usize) -> Vec<T> {
        let d = self.config.d_model;
        let mut out = vec![T::zero(); lens.len() * width * d];
        for (b, &len) in lens.iter().enumerate() {
            for p in 0..len {
                let row = (b * width + p) * d;
                out[row..row + d].copy_from_slice(&self.positions[p * d..(p + 1) * d]);
            }
        }
        out
    }

    fn attention_block(&self, g: &mut Graph<'_, T>, name: &str, xq: NodeId, xkv: NodeId, spec: AttnSpec) -> NodeId {
        let lin = |g: &mut Graph<'_, T>, x: NodeId, w: &str| {
            let wn = g.param_named(&format!("{name}.w{w}"));
            let bn = g.param_named(&format!("{name}.b{w}"));
            let y = g.matmul(x, wn, false, false);
            g.add_bias(y, bn)
        };
        let q = lin(g, xq, "q");
        let k = lin(g, xkv, "k");
        let v = lin(g, xkv, "v");
        let a = g.attention(q, k, v, spec);
        lin(g, a, "o")
    }

    fn feed_forward(&self, g: &mut Graph<'_, T>, name: &str, x: NodeId) -> NodeId {
        let w1 = g.param_named(&format!("{name}.w1"));
        let b1 = g.param_named(&format!("{name}.b1"));
        let w2 = g.param_named(&format!("{name}.w2"));
        let b2 = g.param_named(&format!("{name}.b2"));
        let h = g.matmul(x, w1, false, false);
        let h = g.add_bias(h, b1);
        let h = g.gelu(h);
        let h = g.matmul(h, w2, false, false);
        g.add_bias(h, b2)
    }

    fn norm(&self, g: &mut Graph<'_, T>, name: &str, x: NodeId) -> NodeId {
        let gn = g.param_named(&format!("{name}.g"));
        let bn = g.param_named(&format!("{name}.b"));
        g.layer_norm(x, gn, bn)
    }

    /// Runs the encoder; returns the memory node, its per-example width and
    /// key mask.
    pub fn encode(
        &self,
        g: &mut Graph<'_, T>,
        inputs: &[&ConditionedInput<T>],
        rng: &mut impl Rng,
    ) -> (NodeId, usize, Vec<bool>) {
        let d = self.config.d_model;
        let max_len = self.config.max_len;
        let batch = inputs.len();
        let lens: Vec<usize> = inputs.iter().map(|c| c.encoder_len().min(max_len)).collect();
        let width = lens.iter().copied().max().unwrap_or(1).max(1);
        let needs_means = inputs
            .iter()
            .any(|c| !c.encoder_prepend_vectors.is_empty() || c.encoder_additive.is_some());
        let emb = g.param_named(EMBEDDING);
        let means = needs_means.then(|| {
            let t = g.param_named(TYPE_VECTORS);
            g.row_means(t, type_sets(inputs))
        });
        let mut idx = Vec::with_capacity(batch * width);
        let mut valid = Vec::with_capacity(batch * width);
        for (b, c) in inputs.iter().enumerate() {
            let mut row = 0;
            for _ in &c.encoder_prepend_vectors {
                idx.push((1, b as u32));
                row += 1;
            }
            for &t in c.encoder_tokens.iter().take(lens[b] - row.min(lens[b])) {
                idx.push((0, t));
                row += 1;
            }
            for r in 0..width {
                valid.push(r < lens[b]);
            }
            idx.extend(std::iter::repeat((NONE, 0)).take(width - row));
        }
        let srcs = match means {
            Some(m) => vec![emb, m],
            None => vec![emb],
        };
        let x = g.gather(srcs, idx);
        let x = g.scale(x, T::c((d as f64).sqrt()));
        let pos = g.input(self.position_rows(&lens, width), batch * width, d);
        let mut x = g.add(x, pos);
        let additive = |place: AdditivePlacement| -> Vec<u32> {
            let mut map = vec![NONE; batch * width];
            for (b, c) in inputs.iter().enumerate() {
                if matches!(c.encoder_additive, Some((_, p)) if p == place) {
                    for r in 0..lens[b] {
                        map[b * width + r] = b as u32;
                    }
                }
            }
            map
        };
        if inputs.iter().any(|c| matches!(c.encoder_additive, Some((_, AdditivePlacement::Input)))) {
            x = g.add_gathered(x, means.unwrap(), additive(AdditivePlacement::Input));
        }
        x = g.dropout(x, self.config.dropout, rng);
        let spec = AttnSpec {
            batch,
            heads: self.config.heads,
            lq: width,
            lk: width,
            key_valid: valid.clone(),
            causal: false,
        };
        for l in 0..self.config.layers {
            let h = self.norm(g, &format!("enc.{l}.ln1"), x);
            let a = self.attention_block(g, &format!("enc.{l}.self"), h, h, spec.clone());
            let a = g.dropout(a, self.config.dropout, rng);
            x = g.add(x, a);
            let h = self.norm(g, &format!("enc.{l}.ln2"), x);
            let f = self.feed_forward(g, &format!("enc.{l}.ff"), h);
            let f = g.dropout(f, self.config.dropout, rng);
            x = g.add(x, f);
        }
        x = self.norm(g, "enc.ln", x);
        if inputs
            .iter()
            .any(|c| matches!(c.encoder_additive, Some((_, AdditivePlacement::EncoderOutput))))
        {
            x = g.add_gathered(x, means.unwrap(), additive(AdditivePlacement::EncoderOutput));
        }
        (x, width, valid)
    }

    /// Runs the decoder over `prefixes` (each starting with `<sos>`), where
    /// prefix `s` reads memory example `example_of[s]`. With `last_only` the
    /// logits cover only each prefix's final position.
    #[allow(clippy::too_many_arguments)]
    pub fn decode(
        &self,
        g: &mut Graph<'_, T>,
        memory: NodeId,
        mem_width: usize,
        mem_valid: &[bool],
        inputs: &[&ConditionedInput<T>],
        prefixes: &[Vec<u32>],
        example_of: &[usize],
        last_only: bool,
        rng: &mut impl Rng,
    ) -> (NodeId, usize) {
        let d = self.config.d_model;
        let batch = prefixes.len();
        let lens: Vec<usize> = prefixes.iter().map(|p| p.len().min(self.config.max_len)).collect();
        let width = lens.iter().copied().max().unwrap_or(1).max(1);
        let dec_inputs: Vec<&ConditionedInput<T>> = example_of.iter().map(|&e| inputs[e]).collect();
        let mut ids = vec![PAD; batch * width];
        let mut valid = vec![false; batch * width];
        for (s, p) in prefixes.iter().enumerate() {
            for r in 0..lens[s] {
                ids[s * width + r] = p[r];
                valid[s * width + r] = true;
            }
        }
        let emb = g.param_named(EMBEDDING);
        let x = g.embed(emb, &ids);
        let x = g.scale(x, T::c((d as f64).sqrt()));
        let pos = g.input(self.position_rows(&lens, width), batch * width, d);
        let mut x = g.add(x, pos);
        if dec_inputs.iter().any(|c| c.decoder_sos_vector.is_some()) {
            let t = g.param_named(TYPE_VECTORS);
            let means = g.row_means(t, type_sets(&dec_inputs));
            let mut map = vec![NONE; batch * width];
            for (s, c) in dec_inputs.iter().enumerate() {
                if c.decoder_sos_vector.is_some() {
                    map[s * width] = s as u32;
                }
            }
            x = g.add_gathered(x, means, map);
        }
        x = g.dropout(x, self.config.dropout, rng);

        let identity = example_of.len() == inputs.len() && example_of.iter().enumerate().all(|(i, &e)| i == e);
        let (mem, key_valid) = if identity {
            (memory, mem_valid.to_vec())
        } else {
            let mut idx = Vec::with_capacity(batch * mem_width);
            let mut kv = Vec::with_capacity(batch * mem_width);
            for &e in example_of {
                for r in 0..mem_width {
                    idx.push((0, (e * mem_width + r) as u32));
                    kv.push(mem_valid[e * mem_width + r]);
                }
            }
            (g.gather(vec![memory], idx), kv)
        };
        let self_spec = AttnSpec {
            batch,
            heads: self.config.heads,
            lq: width,
            lk: width,
            key_valid: valid.clone(),
            causal: true,
        };
        let cross_spec = AttnSpec {
            batch,
            heads: self.config.heads,
            lq: width,
            lk: mem_width,
            key_valid,
            causal: false,
        };
        for l in 0..self.config.layers {
            let h = self.norm(g, &format!("dec.{l}.ln1"), x);
            let a = self.attention_block(g, &format!("dec.{l}.self"), h, h, self_spec.clone());
            let a = g.dropout(a, self.config.dropout, rng);
            x = g.add(x, a);
            let h = self.norm(g, &format!("dec.{l}.ln2"), x);
            let a = self.attention_block(g, &format!("dec.{l}.cross"), h, mem, cross_spec.clone());
            let a = g.dropout(a, self.config.dropout, rng);
            x = g.add(x, a);
            let h = self.norm(g, &format!("dec.{l}.ln3"), x);
            let f = self.feed_forward(g, &format!("dec.{l}.ff"), h);
            let f = g.dropout(f, self.config.dropout, rng);
            x = g.add(x, f);
        }
        x = self.norm(g, "dec.ln", x);
        let rows_per = if last_only {
            x = g.gather(
                vec![x],
                lens.iter().enumerate().map(|(s, &l)| (0, (s * width + l - 1) as u32)).collect(),
            );
            1
        } else {
            width
        };
        let mut logits = g.matmul(x, emb, false, true);
        if dec_inputs.iter().any(|c| c.output_bias.is_some()) {
            let t = g.param_named(TYPE_BIAS);
            let bias = g.row_means(t, type_sets(&dec_inputs));
            let mut map = vec![NONE; batch * rows_per];
            for (s, c) in dec_inputs.iter().enumerate() {
                if c.output_bias.is_some() {
                    for r in 0..rows_per {
                        map[s * rows_per + r] = s as u32;
                    }
                }
            }
            logits = g.add_gathered(logits, bias, map);
        }
        (logits, rows_per)
    }

    /// Decoder input and target rows of one sample: `<sos>` + prefix +
    /// target, and prefix + target + `<eos>`.
    pub fn teacher_forcing(&self, s: &Sample<T>) -> (Vec<u32>, Vec<u32>) {
        let max = self.config.max_len;
        let mut body: Vec<u32> = s.input.decoder_forced_prefix.clone();
        body.extend(&s.target);
        body.truncate(max - 1);
        let mut input = vec![SOS];
        input.extend(&body);
        let mut target = body;
        target.push(EOS);
        (input, target)
    }

    /// Mean token cross entropy of a batch.
    pub fn loss(&self, g: &mut Graph<'_, T>, batch: &[Sample<T>], smoothing: f64, rng: &mut impl Rng) -> NodeId {
        let inputs: Vec<&ConditionedInput<T>> = batch.iter().map(|s| &s.input).collect();
        let (memory, width, valid) = self.encode(g, &inputs, rng);
        let (prefixes, targets): (Vec<Vec<u32>>, Vec<Vec<u32>>) = batch.iter().map(|s| self.teacher_forcing(s)).unzip();
        let example_of: Vec<usize> = (0..batch.len()).collect();
        let (logits, rows) = self.decode(g, memory, width, &valid, &inputs, &prefixes, &example_of, false, rng);
        let mut flat = vec![NONE; batch.len() * rows];
        for (s, t) in targets.iter().enumerate() {
            for (r, &id) in t.iter().enumerate() {
                flat[s * rows + r] = id;
            }
        }
        g.cross_entropy(logits, flat, smoothing)
    }

    /// Encoder output of a batch, detached for repeated decoding.
    pub fn memory(&self, inputs: &[&ConditionedInput<T>]) -> Memory<T> {
        let mut g = Graph::new(&self.params, false);
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let (node, len, valid) = self.encode(&mut g, inputs, &mut rng);
        Memory {
            values: g.value(node).to_vec(),
            len,
            valid,
        }
    }

    /// Log-probabilities of the next token after each prefix.
    pub fn next_log_probs(
        &self,
        memory: &Memory<T>,
        inputs: &[&ConditionedInput<T>],
        prefixes: &[Vec<u32>],
        example_of: &[usize],
    ) -> Vec<Vec<T>> {
        let mut g = Graph::new(&self.params, false);
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let d = self.config.d_model;
        let mem = g.input(memory.values.clone(), memory.values.len() / d, d);
        let (logits, _) = self.decode(&mut g, mem, memory.len, &memory.valid, inputs, prefixes, example_of, true, &mut rng);
        let v = g.shape(logits).1;
        g.value(logits)
            .chunks(v)
            .map(|row| {
                let mx = row.iter().fold(T::neg_infinity(), |a, &x| a.max(x));
                let lse = row.iter().fold(T::zero(), |a, &x| a + (x - mx).exp()).ln() + mx;
                row.iter().map(|&x| x - lse).collect()
            })
            .collect()
    }
}
