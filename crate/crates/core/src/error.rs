use thiserror::Error;

use crate::sampler::MRootsSample;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("network must have at least one vertex")]
    EmptyNetwork,
    #[error("vertex {vertex} out of range for a network of {n} vertices")]
    VertexOutOfRange { vertex: usize, n: usize },
    #[error("edge ({src}, {dst}) has non-positive weight {weight}")]
    NonPositiveWeight { src: usize, dst: usize, weight: f64 },
    #[error("self-loop at vertex {0} is not allowed")]
    SelfLoop(usize),
    #[error("edge ({src}, {dst}) listed twice")]
    DuplicateEdge { src: usize, dst: usize },
    #[error("network is not strongly connected")]
    NotIrreducible,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("norm exponent must be >= 1, got {0}")]
    InvalidExponent(f64),
    #[error("measure is not normalized (total mass {0})")]
    UnnormalizedMeasure(f64),
    #[error("operation needs a dense generator but the network has {n} vertices (threshold {threshold})")]
    TooLargeForDense { n: usize, threshold: usize },

    #[error("linear system is numerically singular")]
    SingularSystem,
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("edge ({src}, {dst}) is not in the network")]
    UnknownEdge { src: usize, dst: usize },
    #[error("root-count law is not a probability mass function: {0}")]
    NonPmf(String),
    #[error("path is not self-avoiding")]
    NotSelfAvoiding,
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("characteristic polynomial coefficient a_{0} vanishes")]
    ZeroCoefficient(usize),
    #[error("root count {0} has probability zero")]
    ZeroProbability(usize),
    #[error("no forest with an admissible root count after the maximum number of iterations")]
    MaxItersExceeded(Box<MRootsSample>),

    #[error("partition block {0} is empty")]
    EmptyBlock(usize),
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("invalid vertex subset: {0}")]
    InvalidSubset(String),
    #[error("link operator has the wrong source for this operation: {0}")]
    WrongLinkSource(&'static str),
    #[error("Schur complement produced a negative rate {0}")]
    NegativeRate(f64),

    #[error("basis family is numerically degenerate")]
    DegenerateBasis,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("malformed image: {0}")]
    MalformedImage(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Failures caused by floating-point breakdown rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularSystem
                | Error::NonPmf(_)
                | Error::NegativeRate(_)
                | Error::DegenerateBasis
                | Error::MaxItersExceeded(_)
        )
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_))
    }
}
