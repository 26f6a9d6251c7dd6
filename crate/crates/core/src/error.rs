use std::fmt;

use thiserror::Error;

/// A single broken invariant found while validating a [`NetworkSpec`](crate::network::NetworkSpec).
///
/// Every variant names the offending field so reports can point at it.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    AsymmetricCoupling((usize, usize)),
    DuplicateCoupling((usize, usize)),
    SelfCoupling(usize),
    NegativeRate(String),
    NonFinite(String),
    IndexOutOfRange(String),
    LengthMismatch(String),
    MissingAttachment(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::AsymmetricCoupling((i, j)) => {
                write!(f, "AsymmetricCoupling(({i},{j})): g_{i}{j} has no matching g_{j}{i}")
            }
            Violation::DuplicateCoupling((i, j)) => write!(f, "DuplicateCoupling(({i},{j}))"),
            Violation::SelfCoupling(i) => write!(f, "SelfCoupling({i})"),
            Violation::NegativeRate(field) => write!(f, "NegativeRate(\"{field}\")"),
            Violation::NonFinite(field) => write!(f, "NonFinite(\"{field}\")"),
            Violation::IndexOutOfRange(field) => write!(f, "IndexOutOfRange(\"{field}\")"),
            Violation::LengthMismatch(field) => write!(f, "LengthMismatch(\"{field}\")"),
            Violation::MissingAttachment(field) => write!(f, "MissingAttachment(\"{field}\")"),
        }
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid network: {}", join_violations(.0))]
    Validation(Vec<Violation>),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("index {index} out of range ({what}, limit {limit})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error(
        "state space too large: {n_sites} sites at cutoff {cutoff} give Liouvillian side {side}, \
         above the cap {cap}; use the moment engine"
    )]
    Overflow {
        n_sites: usize,
        cutoff: usize,
        side: u128,
        cap: u128,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("steady state is not unique: {0}")]
    DegenerateSteadyState(String),

    #[error("singular solve: {0}")]
    SingularSolve(String),

    #[error("singular moment system: {0}")]
    SingularSystem(String),

    #[error("too few points: need at least {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("no transient window in trajectory")]
    NoTransientWindow,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    /// Short machine-readable kind, used by the CLI error report and the C ABI.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Validation(_) => "ValidationError",
            Error::InvalidParameter { .. } => "InvalidParameter",
            Error::IndexOutOfRange { .. } => "IndexOutOfRange",
            Error::Overflow { .. } => "Overflow",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::StepSizeUnderflow { .. } => "StepSizeUnderflow",
            Error::InvariantViolation(_) => "InvariantViolation",
            Error::DegenerateSteadyState(_) => "DegenerateSteadyState",
            Error::SingularSolve(_) => "SingularSolve",
            Error::SingularSystem(_) => "SingularSystem",
            Error::TooFewPoints { .. } => "TooFewPoints",
            Error::NoTransientWindow => "NoTransientWindow",
            Error::InsufficientData(_) => "InsufficientData",
            Error::Config(_) => "ConfigParseError",
            Error::Io(_) => "IoError",
            Error::Json(_) => "ConfigParseError",
        }
    }
}

impl Error {
    /// Process exit status for the CLI: 2 config, 3 validation, 4 solver, 5 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) => 2,
            Error::Validation(_)
            | Error::InvalidParameter { .. }
            | Error::IndexOutOfRange { .. }
            | Error::DimensionMismatch(_) => 3,
            Error::Io(_) => 5,
            _ => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
