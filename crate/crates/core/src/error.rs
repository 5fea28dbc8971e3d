use thiserror::Error;

/// Everything that can go wrong while designing or evaluating a beamformer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not Hermitian (relative asymmetry {0:.3e})")]
    NotHermitian(f64),
    #[error("matrix is not positive semidefinite (eigenvalue {0:.3e})")]
    NotPsd(f64),
    #[error("matrix is singular, cannot form inverse square root")]
    SingularForInverse,
    #[error("requested {k} eigenvectors of a {dim}x{dim} matrix")]
    KOutOfRange { k: usize, dim: usize },
    #[error("matrix is zero")]
    ZeroMatrix,
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid size: {0}")]
    InvalidSize(String),
    #[error("too many channel gains: {gains} > min(N_t, N_r) = {limit}")]
    TooManyGains { gains: usize, limit: usize },
    #[error("invalid interference parameter: {0}")]
    InvalidSigma(String),
    #[error("analog matrix is rank deficient (sigma_min/sigma_max = {0:.3e})")]
    RankDeficientAnalog(f64),
    #[error("inner matrix W*(HH*+R)W is singular")]
    SingularInner,
    #[error("matrix B = HH* + R_z is singular")]
    SingularB,
    #[error("interference covariance is singular")]
    SingularInterference,
    #[error("Gram matrix W*BW is singular")]
    SingularGram,
    #[error("candidate column lies in the range of the selected columns")]
    InRangeSpace,
    #[error("dictionary is empty")]
    EmptyDictionary,
    #[error("dictionary exhausted: {needed} columns needed, {available} admissible")]
    DictionaryExhausted { needed: usize, available: usize },
    #[error("no unselected dictionary column carries energy in round {0}")]
    RepeatSelectionExhausted(usize),
    #[error("inner solver failed: {0}")]
    InnerSolverFailure(String),
    #[error("correlation matrix has {positive} positive eigenvalues, {needed} required")]
    RankTooLow { positive: usize, needed: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown preset '{0}'")]
    UnknownPreset(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Short machine-readable tag of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NotHermitian(_) => "NotHermitian",
            Error::NotPsd(_) => "NotPSD",
            Error::SingularForInverse => "SingularForInverse",
            Error::KOutOfRange { .. } => "KOutOfRange",
            Error::ZeroMatrix => "ZeroMatrix",
            Error::NotSquare { .. } => "NotSquare",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::InvalidSize(_) => "InvalidSize",
            Error::TooManyGains { .. } => "TooManyGains",
            Error::InvalidSigma(_) => "InvalidSigma",
            Error::RankDeficientAnalog(_) => "RankDeficientAnalog",
            Error::SingularInner => "SingularInner",
            Error::SingularB => "SingularB",
            Error::SingularInterference => "SingularInterference",
            Error::SingularGram => "SingularGram",
            Error::InRangeSpace => "InRangeSpace",
            Error::EmptyDictionary => "EmptyDictionary",
            Error::DictionaryExhausted { .. } => "DictionaryExhausted",
            Error::RepeatSelectionExhausted(_) => "RepeatSelectionExhausted",
            Error::InnerSolverFailure(_) => "InnerSolverFailure",
            Error::RankTooLow { .. } => "RankTooLow",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::UnknownPreset(_) => "UnknownPreset",
            Error::Io(_) => "IoError",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
