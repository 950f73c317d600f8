use thiserror::Error;

/// Errors produced by the engine.
///
/// Structural problems (bad indices, unknown attributes, malformed formulas)
/// are reported here. Numerical trouble during estimation is never an error:
/// it is reported through [`crate::estimate::StatusCode`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("{kind} graphs support at most {max} nodes, got n = {n}")]
    SizeBound {
        kind: &'static str,
        n: usize,
        max: usize,
    },

    #[error("node count must be at least 1")]
    EmptyGraph,

    #[error("self-tie ({0}, {0}) is not representable")]
    SelfTie(usize),

    #[error("node index {index} out of range for n = {n}")]
    NodeIndex { index: usize, n: usize },

    #[error("graph index {index} out of range for a support of size {size}")]
    GraphIndex { index: u64, size: u64 },

    #[error("attribute '{name}' has {got} values, expected {expected}")]
    AttributeLength {
        name: String,
        got: usize,
        expected: usize,
    },

    #[error("duplicate attribute '{0}'")]
    DuplicateAttribute(String),

    #[error("missing attribute '{0}'")]
    MissingAttribute(String),

    #[error("term '{term}': {msg}")]
    TermDomain { term: String, msg: String },

    #[error("parse error at position {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("invalid model: {0}")]
    Model(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error(
        "empty constrained support: all {total} graphs were excluded by -inf offsets \
         (model '{formula}', n = {n})"
    )]
    EmptySupport {
        total: u64,
        formula: String,
        n: usize,
    },

    #[error(
        "support table would exceed the configured memory cap of {max_rows} distinct rows"
    )]
    TableTooLarge { max_rows: usize },

    #[error("network '{id}' violates a support constraint; its log-probability is -inf")]
    ObservedOutsideSupport { id: String },

    #[error("cache entry is corrupt or has an incompatible format: {0}")]
    CacheCorrupt(String),

    #[error("{0}")]
    Inference(String),

    #[error("{0}")]
    Simulation(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
