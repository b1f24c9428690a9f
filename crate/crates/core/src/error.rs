use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("interval length {delta} is below the lattice span {span}")]
    DeltaBelowSpan { delta: f64, span: f64 },
    #[error("probability {0} has no finite quantile")]
    NoFiniteQuantile(f64),
    #[error("probability {0} is outside (0, 1]")]
    InvalidProbability(f64),
    #[error("distribution has no max-domain-of-attraction class")]
    NoMdaClass,
    #[error("empty vector")]
    EmptyVector,
    #[error("index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("conditioning event has zero mass")]
    ZeroMassEvent,
    #[error("attempt budget exhausted after {attempts} proposals ({accepted} accepted)")]
    AttemptBudgetExhausted { attempts: u64, accepted: u64 },
    #[error("normalizer is zero")]
    ZeroNormalizer,
    #[error("support length {len} exceeds cap {cap}")]
    SupportCapExceeded { len: usize, cap: usize },
    #[error("enumeration of {cells} cells exceeds budget {budget}")]
    EnumerationBudgetExceeded { cells: u128, budget: u128 },
    #[error("method mismatch: {0}")]
    MethodMismatch(String),
    #[error("ratio {ratio} is outside the validity window (1/2, inf)")]
    ValidityWindowViolated { ratio: f64 },
    #[error("interval length {delta} falls between regime bands (b_n = {b_n}, psi = {psi})")]
    AmbiguousScale { delta: f64, b_n: f64, psi: f64 },
    #[error("empty sample")]
    EmptySample,
    #[error("no threshold rule for {0}; supply an explicit x-grid")]
    UserGridRequired(String),
    #[error("invalid parameter `{key}`: {msg}")]
    Param { key: String, msg: String },
    #[error("{0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub fn param(key: &str, msg: impl Into<String>) -> Self {
        Error::Param { key: key.to_string(), msg: msg.into() }
    }

    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Param { .. }
            | Error::Config(_)
            | Error::UserGridRequired(_)
            | Error::DeltaBelowSpan { .. }
            | Error::MethodMismatch(_)
            | Error::AmbiguousScale { .. }
            | Error::InvalidProbability(_) => 2,
            Error::AttemptBudgetExhausted { .. }
            | Error::EnumerationBudgetExceeded { .. }
            | Error::SupportCapExceeded { .. } => 3,
            _ => 1,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
