use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("basis too large: {size} states exceeds the cap of {cap}")]
    BasisTooLarge { size: u128, cap: usize },
    #[error("degenerate grid: {0}")]
    DegenerateGrid(String),
    #[error("grid too large: {modes} modes exceeds the cap of {cap}")]
    GridTooLarge { modes: usize, cap: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("operator is not hermitian")]
    NotHermitian,
    #[error("window [{s}, {t}] is not covered by the path grid")]
    Window { s: f64, t: f64 },
    #[error("mode subsets overlap at mode {0}")]
    OverlappingSubsets(usize),
    #[error("memory estimate of {bytes} bytes exceeds the limit of {limit}")]
    MemoryLimit { bytes: u128, limit: u128 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn shape(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}
