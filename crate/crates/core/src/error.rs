use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("tensor data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },

    #[error("{op}: input {value} outside the admissible domain")]
    Domain { op: &'static str, value: f64 },

    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("variable does not belong to this graph")]
    Detached,

    #[error("degenerate vector in {context} (norm {norm:e})")]
    Degenerate { context: &'static str, norm: f64 },

    #[error("tier index {index} out of range for a {tiers}-tier chain")]
    TierIndex { index: usize, tiers: usize },

    #[error("caption is empty after tokenization")]
    EmptyCaption,

    #[error("missing {component} component for tier {tier}")]
    MissingComponent { component: &'static str, tier: usize },

    #[error("probability {0} outside the open interval (0, 1)")]
    ProbabilityRange(f64),

    #[error("degenerate box [{0}, {1}, {2}, {3}]")]
    DegenerateBox(f64, f64, f64, f64),

    #[error("{0} is empty")]
    Empty(&'static str),

    #[error("unsatisfiable scene configuration: {0}")]
    Unsatisfiable(String),

    #[error("object {0} has no attributes")]
    AttributeExhausted(usize),

    #[error("object {0} has no relations")]
    RelationExhausted(usize),

    #[error("object {0} does not exist in the scene")]
    UnknownObject(usize),

    #[error("no tier-3 caption identifies object {0} uniquely")]
    NotUnique(usize),

    #[error("no valid negative for tier {tier}: every candidate is true for the target")]
    NoValidNegative { tier: usize },

    #[error("caption {caption:?} does not parse: {reason}")]
    Parse { caption: String, reason: String },

    #[error("invalid configuration field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("non-finite loss at step {0}")]
    NonFiniteLoss(usize),

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("incompatible checkpoint: {0}")]
    IncompatibleCheckpoint(String),
}

impl Error {
    /// Raised by inputs sitting on a singular configuration rather than by a
    /// programming or configuration mistake.
    pub fn is_degenerate(&self) -> bool {
        matches!(
            self,
            Error::Degenerate { .. } | Error::DegenerateBox(..) | Error::Domain { .. }
        )
    }

    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::ShapeMismatch {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub(crate) fn config(field: &str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
