use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("non-finite input {value} for `{name}`")]
    NonFinite { name: &'static str, value: f64 },

    #[error("inverse Mills ratio undefined at x = {x}: density underflows in the far tail")]
    MillsUnderflow { x: f64 },

    #[error("implied productivity is not defined at r = 0; use the salary-match wedge")]
    ZeroOffer,

    #[error("root finder failed for phi = {phi} in bracket [{lo}, {hi}]")]
    RootNotFound { phi: f64, lo: f64, hi: f64 },

    #[error("quadrature did not converge: achieved error {achieved:e}, requested {requested:e}")]
    Quadrature { achieved: f64, requested: f64 },

    #[error("local polynomial fit at x = {x}: {found} points in bandwidth, need {needed}")]
    KernelSupport { x: f64, found: usize, needed: usize },

    #[error("bin layout mismatch: {0}")]
    BinMismatch(String),

    #[error("singular matrix: {0}")]
    Singular(&'static str),

    #[error("optimizer failed after all restarts (best criterion {best_criterion:e})")]
    Optimizer { best_criterion: f64, best: [f64; 3] },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("derivative not defined for {0}")]
    Undefined(&'static str),

    #[error("test precondition violated: {0}")]
    TestOrdering(String),

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures of a numerical routine, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::MillsUnderflow { .. }
                | Error::RootNotFound { .. }
                | Error::Quadrature { .. }
                | Error::KernelSupport { .. }
                | Error::Singular(_)
                | Error::Optimizer { .. }
                | Error::TestOrdering(_)
        )
    }
}

pub(crate) fn finite(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite { name, value })
    }
}
