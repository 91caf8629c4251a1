use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SarError {
    #[error("{what} = {value} outside domain [{lo}, {hi}]")]
    OutOfDomain {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("path touches surface: range {range:e} <= {eps:e}")]
    PathTouchesSurface { range: f64, eps: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid covector: tau must be nonzero")]
    ZeroTau,

    #[error("derivative self-test failed: max discrepancy {discrepancy:e} > {tol:e} ({what})")]
    SelfTestFailed {
        what: String,
        discrepancy: f64,
        tol: f64,
    },

    #[error("trace precondition failed: {0}")]
    TracePrecondition(String),

    #[error("corrector failed at step {step}: residual {residual:e}")]
    CorrectorFailure { step: usize, residual: f64 },

    #[error("undefined smoothness score: {0}")]
    UndefinedScore(String),

    #[error("invalid reference configuration: {0}")]
    InvalidReference(String),

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, SarError>;

pub(crate) fn domain_check<T: crate::Real>(
    what: &'static str,
    value: T,
    lo: T,
    hi: T,
) -> Result<()> {
    // closed interval; NaN fails
    if value >= lo && value <= hi {
        Ok(())
    } else {
        Err(SarError::OutOfDomain {
            what,
            value: value.to_f64_lossy(),
            lo: lo.to_f64_lossy(),
            hi: hi.to_f64_lossy(),
        })
    }
}
