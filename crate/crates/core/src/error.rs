use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("principal utility must be finite and non-negative: {0}")]
    NegativeUtility(String),
    #[error("event prior is not a probability distribution: {0}")]
    BadPrior(String),
    #[error("outcome mean outside [0,1]: {0}")]
    BadMean(String),
    #[error("invalid norm: {0}")]
    BadNorm(String),
    #[error("malformed instance: {0}")]
    BadInstance(String),
    #[error("malformed predictor: {0}")]
    BadPredictor(String),
    #[error("prediction {0} carries no marginal mass")]
    ZeroMass(f64),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("unsupported norm for this solver: {0}")]
    UnsupportedNorm(String),
    #[error("precision must lie in (0, 1/3), got {0}")]
    BadDelta(f64),
    #[error("supply mismatch for event {event}: expected {expected}, found {found}")]
    SupplyViolation {
        event: usize,
        expected: f64,
        found: f64,
    },
    #[error("precondition violated: {0}")]
    PreconditionViolation(String),
    #[error("instance is not event independent")]
    NotEventIndependent,
    #[error("instance is not of binary-action shape: {0}")]
    NotBinaryShape(String),
    #[error("instance exceeds exhaustive-search caps: {0}")]
    TooLarge(String),
    #[error("no feasible predictor: {0}")]
    Infeasible(String),
}

impl Error {
    /// Stable machine-readable code, also used by the CLI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NegativeUtility(_) => "NEGATIVE_UTILITY",
            Error::BadPrior(_) => "BAD_PRIOR",
            Error::BadMean(_) => "BAD_MEAN",
            Error::BadNorm(_) => "BAD_NORM",
            Error::BadInstance(_) => "BAD_INSTANCE",
            Error::BadPredictor(_) => "BAD_PREDICTOR",
            Error::ZeroMass(_) => "ZERO_MASS",
            Error::NumericalFailure(_) => "NUMERICAL_FAILURE",
            Error::UnsupportedNorm(_) => "UNSUPPORTED_NORM",
            Error::BadDelta(_) => "BAD_DELTA",
            Error::SupplyViolation { .. } => "SUPPLY_VIOLATION",
            Error::PreconditionViolation(_) => "PRECONDITION_VIOLATION",
            Error::NotEventIndependent => "NOT_EVENT_INDEPENDENT",
            Error::NotBinaryShape(_) => "NOT_BINARY_SHAPE",
            Error::TooLarge(_) => "TOO_LARGE",
            Error::Infeasible(_) => "INFEASIBLE",
        }
    }

    /// Input-validation errors, as opposed to solver failures.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::NegativeUtility(_)
                | Error::BadPrior(_)
                | Error::BadMean(_)
                | Error::BadNorm(_)
                | Error::BadInstance(_)
                | Error::BadPredictor(_)
                | Error::ZeroMass(_)
                | Error::UnsupportedNorm(_)
                | Error::BadDelta(_)
                | Error::PreconditionViolation(_)
                | Error::NotEventIndependent
                | Error::NotBinaryShape(_)
                | Error::TooLarge(_)
        )
    }
}
