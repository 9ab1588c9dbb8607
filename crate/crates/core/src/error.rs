use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("matrix is not symmetric (max |M - M^T| = {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive definite (smallest eigenvalue {0:e})")]
    NotPositiveDefinite(f64),

    #[error("matrix is numerically singular (sigma_min / sigma_max = {0:e})")]
    Singular(f64),

    #[error("power normalization needs a positive diagonal (entry {index} = {value:e})")]
    NonPositiveDiagonal { index: usize, value: f64 },

    #[error("matrix is not orthonormal (||U^T U - I||_F = {0:e})")]
    NotOrthonormal(f64),

    #[error("vertex {0} has zero degree")]
    DisconnectedVertex(usize),

    #[error("degenerate spectrum: eigenvalue gap {gap:e} below {threshold:e}")]
    DegenerateSpectrum { gap: f64, threshold: f64 },

    #[error("optimizer diverged at iteration {iteration}: {what}")]
    Diverged { iteration: usize, what: String },

    #[error("incomplete LU breakdown: zero pivot at index {0}")]
    IluBreakdown(usize),

    #[error("zero diagonal entry at index {0}")]
    ZeroDiagonal(usize),

    #[error("degenerate parameters: {0}")]
    DegenerateParameters(String),

    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Short stable identifier, used in report status columns.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::InvalidDimension(_) => "invalid-dimension",
            Self::InvalidInput(_) => "invalid-input",
            Self::DimensionMismatch { .. } => "dimension-mismatch",
            Self::IndexOutOfRange { .. } => "index-out-of-range",
            Self::NotSymmetric(_) => "not-symmetric",
            Self::NotPositiveDefinite(_) => "not-positive-definite",
            Self::Singular(_) => "singular",
            Self::NonPositiveDiagonal { .. } => "non-positive-diagonal",
            Self::NotOrthonormal(_) => "not-orthonormal",
            Self::DisconnectedVertex(_) => "disconnected-vertex",
            Self::DegenerateSpectrum { .. } => "degenerate-spectrum",
            Self::Diverged { .. } => "diverged",
            Self::IluBreakdown(_) => "ilu-breakdown",
            Self::ZeroDiagonal(_) => "zero-diagonal",
            Self::DegenerateParameters(_) => "degenerate-parameters",
            Self::OutOfRange(_) => "out-of-range",
            Self::Parse(_) => "parse",
        }
    }

    /// True when the error stems from malformed arguments or input rather
    /// than from the numerics.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Self::InvalidDimension(_)
                | Self::InvalidInput(_)
                | Self::DimensionMismatch { .. }
                | Self::IndexOutOfRange { .. }
                | Self::DegenerateParameters(_)
                | Self::OutOfRange(_)
                | Self::Parse(_)
        )
    }
}
