use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The Gram matrix of a least-squares system is too ill-conditioned to
    /// invert reliably. Usually a degenerate training design.
    #[error("rank-deficient system: condition number {condition:.3e} exceeds ceiling {ceiling:.1e}")]
    RankDeficient { condition: f64, ceiling: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("timing error {theta} outside the admissible range [{min}, {max}]")]
    ThetaOutOfRange { theta: i64, min: i64, max: i64 },

    #[error("channel power profile is empty")]
    EmptyProfile,

    #[error("empty search grid: {0}")]
    EmptyGrid(String),

    #[error("Fisher information matrix is singular")]
    SingularFim,

    #[error("noise variance must be strictly positive")]
    ZeroNoise,

    #[error("closed-form CFO denominator vanished ({0:.3e})")]
    ZeroDenominator(f64),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("unknown algorithm '{0}'")]
    UnknownAlgorithm(String),

    #[error("malformed received-signal file: {0}")]
    Format(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable, greppable identifier for the error class.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DimensionMismatch(_) => "E_DIMENSION",
            Error::RankDeficient { .. } => "E_RANK_DEFICIENT",
            Error::InvalidConfig(_) => "E_INVALID_CONFIG",
            Error::ThetaOutOfRange { .. } => "E_THETA_RANGE",
            Error::EmptyProfile => "E_EMPTY_PROFILE",
            Error::EmptyGrid(_) => "E_EMPTY_GRID",
            Error::SingularFim => "E_SINGULAR_FIM",
            Error::ZeroNoise => "E_ZERO_NOISE",
            Error::ZeroDenominator(_) => "E_ZERO_DENOMINATOR",
            Error::EmptyInput(_) => "E_EMPTY_INPUT",
            Error::UnknownAlgorithm(_) => "E_UNKNOWN_ALGORITHM",
            Error::Format(_) => "E_FORMAT",
            Error::Config(_) => "E_CONFIG",
            Error::Io(_) => "E_IO",
        }
    }
}
