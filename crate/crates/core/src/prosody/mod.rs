//! Prosodic structure domain: levels, generalized labels, trees as labeled
//! spans, boundary-mark sequences and the conversions between them.

mod label;
mod repair;
mod sequence;
mod tree;

pub use label::{GeneralizedLabel, LabelVocabulary, ProsodicLevel};
pub use repair::repair_tree;
pub use sequence::{
    marks_to_tree, sequence_to_tree, tokenize_line, tree_to_marks, tree_to_sequence, BoundarySequence,
    LineError,
};
pub use tree::{
    hamming_delta, validate_tree, Derivation, DerivationSpan, GoldLabels, LabeledSpan, ProsodicTree,
    ValidationReport, Violation,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProsodyError {
    #[error("empty sentence")]
    EmptySentence,
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("the final boundary mark must be #3")]
    MissingFinalBoundary,
    #[error("invalid tree: {0}")]
    InvalidTree(ValidationReport),
    #[error("bad label {0:?}")]
    BadLabel(String),
    #[error("bad span {0:?}")]
    BadSpan(String),
    #[error("bad label vocabulary: {0}")]
    BadVocabulary(String),
    #[error("label {0} is not in the vocabulary")]
    LabelNotInVocabulary(GeneralizedLabel),
    #[error("span {span:?} outside a sentence of length {n}")]
    SpanOutOfRange { span: LabeledSpan, n: usize },
}
