use thiserror::Error;

/// Every failure the toolkit reports. `class()` gives the stable machine-readable name.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("derivative evaluated at the pole {0}")]
    Pole(String),
    #[error("dimension mismatch: {0} vs {1}")]
    Dimension(usize, usize),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("enumeration budget exceeded: {0} elements (cap {1})")]
    Budget(usize, usize),
    #[error("branch {branch} is not uniformly contracting: sup |g'| = {sup}")]
    Contraction { branch: String, sup: f64 },
    #[error("branch set is empty after truncation")]
    Truncation,
    #[error("power iteration did not converge after {0} iterations")]
    NonConvergence(usize),
    #[error("no sign change of log lambda(a) on [{lo}, {hi}]")]
    Bracket { lo: f64, hi: f64 },
    #[error("orbit escaped the coded region at x = {0}")]
    Escape(String),
    #[error("flower scale too large: {0}")]
    Scale(String),
    #[error("no return path to the base chart from chart {0}")]
    Irreducible(usize),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub fn class(&self) -> &'static str {
        match self {
            Error::Pole(_) => "pole",
            Error::Dimension(..) => "dimension",
            Error::Invalid(_) => "invalid",
            Error::Budget(..) => "budget",
            Error::Contraction { .. } => "contraction",
            Error::Truncation => "truncation",
            Error::NonConvergence(_) => "non_convergence",
            Error::Bracket { .. } => "bracket",
            Error::Escape(_) => "escape",
            Error::Scale(_) => "scale",
            Error::Irreducible(_) => "irreducible",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
