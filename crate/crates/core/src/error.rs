use thiserror::Error;

/// Errors surfaced by the forward solvers, partitioning, sampling,
/// completion and inversion layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("conductivity must be strictly positive and finite (offending value {value} at index {index})")]
    NonPositiveConductivity { index: usize, value: f64 },

    #[error("grid level {level} is out of the supported range 1..={max}")]
    UnsupportedLevel { level: u32, max: u32 },

    #[error("parameter grid {param}x{param} does not divide the {cells}x{cells} cell grid")]
    IncompatibleParamGrid { param: usize, cells: usize },

    #[error("dimension mismatch: {context} (expected {expected}, got {got})")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("matrix dimension {n} is not a power-of-two multiple of min_block {min_block}")]
    BadPartitionSize { n: usize, min_block: usize },

    #[error("min_block must be at least 2 (got {0})")]
    BadMinBlock(usize),

    #[error("sampling mask is missing entries of diagonal block (level {level}, rows {row_start}+{row_len}, cols {col_start}+{col_len})")]
    MissingDiagonalSamples {
        level: u32,
        row_start: usize,
        row_len: usize,
        col_start: usize,
        col_len: usize,
    },

    #[error("basis columns are not orthonormal: max |B^T B - I| = {defect:e}")]
    NonOrthonormalBasis { defect: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("transport sweep did not converge: residual {residual:e} after {iterations} iterations")]
    TransportNonConvergence { residual: f64, iterations: usize },

    #[error("malformed file: {0}")]
    BadFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
