use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("arity mismatch: expected {expected}, found {found}")]
    ArityMismatch { expected: usize, found: usize },

    #[error("amplitude not normalized: squared norm {norm_sq:.3e} (tolerance {tol:.0e})")]
    NotNormalized { norm_sq: f64, tol: f64 },

    #[error("dense payload of {entries} entries exceeds cap {cap}")]
    DenseCapExceeded { entries: u128, cap: usize },

    #[error("delta-shaped pair kernel cannot carry a normalized flag on a grid")]
    DeltaKernel,

    #[error("invalid symmetrization groups: {0}")]
    InvalidGroups(String),

    #[error("unknown mode {0}")]
    UnknownMode(String),

    #[error("mode {mode} is not covered by {context}")]
    UncoveredMode { mode: String, context: String },

    #[error("permanent of size {0} exceeds the supported maximum of 12")]
    PermanentTooLarge(usize),

    #[error("contraction requires {0} slot bijections, above the configured limit")]
    TooManyBijections(u128),

    #[error("matrix is not unitary at bin {bin}: residual {residual:.3e}")]
    NotUnitary { bin: usize, residual: f64 },

    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    #[error("coherent cutoff {epsilon:e} needs more than {max} photons")]
    CutoffTooTight { epsilon: f64, max: usize },

    #[error("detector scopes overlap on mode {0}")]
    OverlappingScopes(String),

    #[error("modes {0} and {1} are not orthogonal; partition requires orthogonal modes")]
    NonOrthogonalPartition(String, String),

    #[error("filter family for mode {0} is not orthonormal")]
    NonOrthonormalFilters(String),

    #[error("state outside oracle truncation: {0}")]
    OutsideTruncation(String),

    #[error("oracle space too large: dimension {dim} exceeds cap {cap}")]
    OracleCapExceeded { dim: usize, cap: usize },

    #[error("unsupported observable: {0}")]
    UnsupportedObservable(String),

    #[error("probability {0:.3e} outside [0, 1] beyond rounding budget")]
    ProbabilityOutOfRange(f64),

    #[error("{0}")]
    Invalid(String),

    #[error("schema violation at {path}: {message}")]
    Schema { path: String, message: String },

    #[error("sweep point {point} ({params}): {source}")]
    AtPoint { point: usize, params: String, source: Box<Error> },
}

impl Error {
    /// Violations of a numerical contract (unitarity, normalization, range)
    /// as opposed to malformed input.
    pub fn is_numerical(&self) -> bool {
        if let Error::AtPoint { source, .. } = self {
            return source.is_numerical();
        }
        matches!(
            self,
            Error::NotNormalized { .. }
                | Error::NotUnitary { .. }
                | Error::ProbabilityOutOfRange(_)
                | Error::PermanentTooLarge(_)
                | Error::TooManyBijections(_)
                | Error::DenseCapExceeded { .. }
                | Error::OracleCapExceeded { .. }
                | Error::CutoffTooTight { .. }
        )
    }
}
