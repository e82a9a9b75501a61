//! The ten conditioning modes: how an attribute set is turned into extra
//! tokens, vectors or biases for an encoder-decoder model.
//!
//! Nothing here depends on a particular model. [`condition`] produces a
//! [`ConditionedInput`] that a model consumes; vectors come from a
//! [`TypeEmbeddingTable`] generic over the scalar type.

use std::fmt;
use std::str::FromStr;

use num_traits::Float;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attributes::{AttributeSet, AttributeType};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConditioningError {
    #[error("unknown conditioning mode `{0}`")]
    UnknownMode(String),
    #[error("table has {rows} rows of width {width}, expected {expected_rows} rows")]
    Shape {
        rows: usize,
        width: usize,
        expected_rows: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ConditioningMode {
    Baseline,
    TagEnc,
    TagDec,
    TagEncDec,
    EmbPWSum,
    EmbAdd,
    EmbEnc,
    EmbSOS,
    EmbEncSOS,
    OutBias,
}

impl ConditioningMode {
    pub const ALL: [ConditioningMode; 10] = [
        ConditioningMode::Baseline,
        ConditioningMode::TagEnc,
        ConditioningMode::TagDec,
        ConditioningMode::TagEncDec,
        ConditioningMode::EmbPWSum,
        ConditioningMode::EmbAdd,
        ConditioningMode::EmbEnc,
        ConditioningMode::EmbSOS,
        ConditioningMode::EmbEncSOS,
        ConditioningMode::OutBias,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ConditioningMode::Baseline => "Baseline",
            ConditioningMode::TagEnc => "TagEnc",
            ConditioningMode::TagDec => "TagDec",
            ConditioningMode::TagEncDec => "TagEncDec",
            ConditioningMode::EmbPWSum => "EmbPWSum",
            ConditioningMode::EmbAdd => "EmbAdd",
            ConditioningMode::EmbEnc => "EmbEnc",
            ConditioningMode::EmbSOS => "EmbSOS",
            ConditioningMode::EmbEncSOS => "EmbEncSOS",
            ConditioningMode::OutBias => "OutBias",
        }
    }

    pub fn uses_tags(self) -> bool {
        matches!(
            self,
            ConditioningMode::TagEnc | ConditioningMode::TagDec | ConditioningMode::TagEncDec
        )
    }

    pub fn uses_table(self) -> bool {
        !self.uses_tags() && self != ConditioningMode::Baseline
    }

    /// Extra encoder and decoder positions taken by `n` present types.
    pub fn occupied(self, n: usize) -> (usize, usize) {
        match self {
            ConditioningMode::TagEnc => (n, 0),
            ConditioningMode::TagDec => (0, n + 1),
            ConditioningMode::TagEncDec => (n, n + 1),
            ConditioningMode::EmbEnc | ConditioningMode::EmbEncSOS => (1, 0),
            _ => (0, 0),
        }
    }
}

impl fmt::Display for ConditioningMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ConditioningMode {
    type Err = ConditioningError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| ConditioningError::UnknownMode(s.to_string()))
    }
}

impl Serialize for ConditioningMode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for ConditioningMode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Train,
    Infer,
}

pub const NULL_TAG: &str = "<null>";

/// Tag types in presentation order: shuffled at training time, canonical at
/// inference time.
pub fn tags_for(attrs: &AttributeSet, phase: Phase, seed: u64) -> Vec<AttributeType> {
    let mut types = attrs.types();
    if phase == Phase::Train && types.len() > 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        types.shuffle(&mut rng);
    }
    types
}

/// Token ids of the nine tags and `<null>` in some vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagVocab {
    pub tags: [u32; AttributeType::COUNT],
    pub null: u32,
}

impl TagVocab {
    pub fn id(&self, t: AttributeType) -> u32 {
        self.tags[t.index()]
    }

    pub fn is_tag(&self, id: u32) -> bool {
        id == self.null || self.tags.contains(&id)
    }
}

/// Per-type trainable parameters: one `d_model` row per type for the
/// embedding modes and one vocabulary-sized bias row per type for OutBias.
/// Rows follow [`AttributeType::ALL`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeEmbeddingTable<T> {
    pub d_model: usize,
    pub vocab_size: usize,
    pub type_vectors: Vec<T>,
    pub bias_rows: Vec<T>,
}

impl<T: Float> TypeEmbeddingTable<T> {
    pub fn zeros(d_model: usize, vocab_size: usize) -> Self {
        TypeEmbeddingTable {
            d_model,
            vocab_size,
            type_vectors: vec![T::zero(); AttributeType::COUNT * d_model],
            bias_rows: vec![T::zero(); AttributeType::COUNT * vocab_size],
        }
    }

    /// Uniform initialisation in `[-scale, scale]`.
    pub fn random(d_model: usize, vocab_size: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let mut t = Self::zeros(d_model, vocab_size);
        let mut draw = || T::from(rng.gen_range(-scale..=scale)).unwrap();
        t.type_vectors.iter_mut().for_each(|x| *x = draw());
        t.bias_rows.iter_mut().for_each(|x| *x = draw());
        t
    }

    pub fn row(&self, t: AttributeType) -> &[T] {
        let i = t.index() * self.d_model;
        &self.type_vectors[i..i + self.d_model]
    }

    pub fn bias_row(&self, t: AttributeType) -> &[T] {
        let i = t.index() * self.vocab_size;
        &self.bias_rows[i..i + self.vocab_size]
    }

    /// Mean of the present types' rows; the zero vector for an empty set.
    pub fn average_embedding(&self, attrs: &AttributeSet) -> Vec<T> {
        mean_rows(attrs, self.d_model, |t| self.row(t))
    }

    /// Mean of the present types' bias rows; exactly zero for an empty set.
    pub fn average_bias(&self, attrs: &AttributeSet) -> Vec<T> {
        mean_rows(attrs, self.vocab_size, |t| self.bias_row(t))
    }
}

fn mean_rows<'a, T: Float + 'a>(
    attrs: &AttributeSet,
    width: usize,
    row: impl Fn(AttributeType) -> &'a [T],
) -> Vec<T> {
    let types = attrs.types();
    let mut out = vec![T::zero(); width];
    if types.is_empty() {
        return out;
    }
    for t in &types {
        for (o, v) in out.iter_mut().zip(row(*t)) {
            *o = *o + *v;
        }
    }
    let n = T::from(types.len()).unwrap();
    out.iter_mut().for_each(|o| *o = *o / n);
    out
}

/// Where a position-wise additive vector is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdditivePlacement {
    Input,
    EncoderOutput,
}

/// Everything a model needs to apply one conditioning mode to one example.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedInput<T> {
    pub encoder_tokens: Vec<u32>,
    pub encoder_prepend_vectors: Vec<Vec<T>>,
    pub encoder_additive: Option<(Vec<T>, AdditivePlacement)>,
    pub decoder_forced_prefix: Vec<u32>,
    pub decoder_sos_vector: Option<Vec<T>>,
    pub output_bias: Option<Vec<T>>,
    /// The types the vectors were averaged over, for gradient routing.
    pub types: Vec<AttributeType>,
}

impl<T> ConditionedInput<T> {
    pub fn plain(src_tokens: &[u32]) -> Self {
        ConditionedInput {
            encoder_tokens: src_tokens.to_vec(),
            encoder_prepend_vectors: Vec::new(),
            encoder_additive: None,
            decoder_forced_prefix: Vec::new(),
            decoder_sos_vector: None,
            output_bias: None,
            types: Vec::new(),
        }
    }

    /// Encoder positions including prepended vectors.
    pub fn encoder_len(&self) -> usize {
        self.encoder_tokens.len() + self.encoder_prepend_vectors.len()
    }
}

/// Applies `mode` to a tokenised source. Tag modes need `tags`; the other
/// non-baseline modes read `table`.
pub fn condition<T: Float>(
    mode: ConditioningMode,
    attrs: &AttributeSet,
    src_tokens: &[u32],
    table: &TypeEmbeddingTable<T>,
    tags: &TagVocab,
    phase: Phase,
    seed: u64,
) -> ConditionedInput<T> {
    let mut out = ConditionedInput::plain(src_tokens);
    if mode == ConditioningMode::Baseline {
        return out;
    }
    out.types = attrs.types();
    let ordered: Vec<u32> = tags_for(attrs, phase, seed).into_iter().map(|t| tags.id(t)).collect();
    let mean = || table.average_embedding(attrs);
    match mode {
        ConditioningMode::Baseline => {}
        ConditioningMode::TagEnc => out.encoder_tokens.extend(&ordered),
        ConditioningMode::TagDec => {
            out.decoder_forced_prefix = ordered;
            out.decoder_forced_prefix.push(tags.null);
        }
        ConditioningMode::TagEncDec => {
            out.encoder_tokens.extend(&ordered);
            out.decoder_forced_prefix = ordered;
            out.decoder_forced_prefix.push(tags.null);
        }
        ConditioningMode::EmbPWSum => out.encoder_additive = Some((mean(), AdditivePlacement::Input)),
        ConditioningMode::EmbAdd => out.encoder_additive = Some((mean(), AdditivePlacement::EncoderOutput)),
        ConditioningMode::EmbEnc => out.encoder_prepend_vectors.push(mean()),
        ConditioningMode::EmbSOS => out.decoder_sos_vector = Some(mean()),
        ConditioningMode::EmbEncSOS => {
            let m = mean();
            out.encoder_prepend_vectors.push(m.clone());
            out.decoder_sos_vector = Some(m);
        }
        ConditioningMode::OutBias => out.output_bias = Some(table.average_bias(attrs)),
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> TagVocab {
        TagVocab {
            tags: [100, 101, 102, 103, 104, 105, 106, 107, 108],
            null: 109,
        }
    }

    fn table() -> TypeEmbeddingTable<f64> {
        TypeEmbeddingTable::random(4, 6, 1.0, &mut ChaCha8Rng::seed_from_u64(3))
    }

    #[test]
    fn modes_parse_by_name() {
        for m in ConditioningMode::ALL {
            assert_eq!(m.name().parse::<ConditioningMode>().unwrap(), m);
        }
        assert!("TagBoth".parse::<ConditioningMode>().is_err());
    }

    #[test]
    fn tagenc_and_tagdec_lengths() {
        let attrs = AttributeSet::parse_list("il:masculine singular formal").unwrap();
        let src = [1, 2, 3, 4, 5];
        let t = table();
        let enc = condition(ConditioningMode::TagEnc, &attrs, &src, &t, &vocab(), Phase::Infer, 0);
        assert_eq!(enc.encoder_tokens, vec![1, 2, 3, 4, 5, 103, 105, 108]);
        let dec = condition(ConditioningMode::TagDec, &attrs, &src, &t, &vocab(), Phase::Infer, 0);
        assert_eq!(dec.decoder_forced_prefix, vec![103, 105, 108, 109]);
        assert_eq!(dec.encoder_tokens.len(), 5);
    }

    #[test]
    fn baseline_leaves_everything_empty() {
        let attrs = AttributeSet::parse_list("sp:feminine plural informal").unwrap();
        let c = condition(ConditioningMode::Baseline, &attrs, &[7, 8], &table(), &vocab(), Phase::Train, 9);
        assert_eq!(c, ConditionedInput::plain(&[7, 8]));
    }

    #[test]
    fn tags_are_canonical_at_inference_and_shuffled_in_training() {
        let attrs = AttributeSet::parse_list("formal plural").unwrap();
        assert_eq!(
            tags_for(&attrs, Phase::Infer, 5),
            vec![AttributeType::Plural, AttributeType::Formal]
        );
        assert_eq!(tags_for(&AttributeSet::EMPTY, Phase::Train, 5), vec![]);
        let mut first_plural = 0;
        for seed in 0..100 {
            if tags_for(&attrs, Phase::Train, seed)[0] == AttributeType::Plural {
                first_plural += 1;
            }
        }
        assert!(first_plural > 20 && first_plural < 80, "{first_plural}");
    }

    #[test]
    fn averages() {
        let t = table();
        let one = AttributeSet::parse_list("sp:feminine").unwrap();
        assert_eq!(t.average_embedding(&one), t.row(AttributeType::SpFeminine));
        let two = AttributeSet::parse_list("sp:feminine formal").unwrap();
        let want: Vec<f64> = t
            .row(AttributeType::SpFeminine)
            .iter()
            .zip(t.row(AttributeType::Formal))
            .map(|(a, b)| (a + b) / 2.0)
            .collect();
        assert_eq!(t.average_embedding(&two), want);
        assert_eq!(t.average_embedding(&AttributeSet::EMPTY), vec![0.0; 4]);
        assert_eq!(t.average_bias(&AttributeSet::EMPTY), vec![0.0; 6]);
    }
}
