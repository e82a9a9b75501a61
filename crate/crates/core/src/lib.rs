//! Attribute detection, corpus annotation, context conditioning and
//! evaluation for translating into Polish with controlled speaker and
//! interlocutor agreement.

pub mod attributes;
pub mod conditioning;
pub mod corpus;
pub mod detector;
pub mod metrics;
pub mod morpho;
pub mod synth;

pub use attributes::{Attribute, AttributeSet, AttributeType, ContextGroup, InterlocutorRow};
pub use conditioning::{ConditionedInput, ConditioningMode, Phase, TagVocab, TypeEmbeddingTable};
pub use detector::{Detection, Detector, Evidence};
pub use morpho::{Lexicon, MorphFeatures, MorphToken, Sentence};

/// Single-precision type table, the training default.
pub type TypeTableF32 = TypeEmbeddingTable<f32>;
/// Double-precision type table, used for gradient checks.
pub type TypeTableF64 = TypeEmbeddingTable<f64>;
pub type ConditionedInputF32 = ConditionedInput<f32>;
pub type ConditionedInputF64 = ConditionedInput<f64>;
