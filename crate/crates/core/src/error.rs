use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },
    #[error("matrix asymmetry {asymmetry:e} exceeds tolerance {tol:e}")]
    AsymmetryTooLarge { asymmetry: f64, tol: f64 },
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("columns are not orthonormal (deviation {0:e})")]
    NotOrthonormal(f64),
    #[error("matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("matrix is not positive definite (min eigenvalue {0:e})")]
    NotPd(f64),
    #[error("ambient dimensions differ ({0} vs {1})")]
    AmbientMismatch(usize, usize),
    #[error("principal angles are undefined for the trivial subspace")]
    TrivialSubspace,
    #[error("subspace is not contained in the enclosing subspace (residual {0:e})")]
    NotContained(f64),
    #[error("rank {rank} exceeds ambient dimension {ambient}")]
    RankExceedsAmbient { rank: usize, ambient: usize },
    #[error("requested rank {rank} but only {available} eigenvalues are positive")]
    RankDeficient { rank: usize, available: usize },
    #[error("sample set is empty")]
    EmptySampleSet,
    #[error("rank {rank} exceeds min(samples, dimension) = {limit}")]
    RankTooLarge { rank: usize, limit: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("noise variance must be positive, got {0}")]
    NonpositiveNoise(f64),
    #[error("invalid problem instance: {0}")]
    InvalidInstance(String),
    #[error("class {0} has a rank-zero mismatched covariance")]
    DegenerateMismatchedRank(usize),
    #[error("Sigma_ij is not positive definite for pair ({0}, {1})")]
    SigmaNotPd(usize, usize),
    #[error("pair ({0}, {1}) violates the low-noise conditions")]
    ConditionsFail(usize, usize),
    #[error("kernel determinant is not positive for pair ({0}, {1})")]
    KernelDetNonpositive(usize, usize),
    #[error("rank of K for pair ({i}, {j}) is {found}, expected {expected}")]
    KernelRankMismatch {
        i: usize,
        j: usize,
        found: usize,
        expected: usize,
    },
    #[error("covariances must be diagonal")]
    DiagonalityViolated,
    #[error("matrix is not orthogonal (deviation {0:e})")]
    NotOrthogonal(f64),
    #[error("rotated subspaces have no overlap with the true subspaces (s12 = {0}, s21 = {1})")]
    DegenerateOverlap(usize, usize),
    #[error("need at least 3 usable points to fit a decay exponent, found {0}")]
    InsufficientPoints(usize),
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
