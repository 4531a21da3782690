use thiserror::Error;

/// Errors raised by grid construction, solvers and estimate checks.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("mask interior is not connected ({components} components)")]
    DisconnectedMask { components: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("field has {got} values, grid has {expected} interior cells")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-finite value at cell {0}")]
    NonFinite(usize),

    #[error("operation requires a one-dimensional grid")]
    NotOneDimensional,

    #[error("estimate hypothesis not met: {0}")]
    HypothesisUnmet(String),

    #[error("cutoff support or window leaves the domain")]
    OutsideDomain,

    #[error("corpus too small: need at least {needed} reports, got {got}")]
    CorpusTooSmall { needed: usize, got: usize },

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },
}

pub type Result<T> = std::result::Result<T, Error>;
