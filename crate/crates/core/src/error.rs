use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("matrix is not symmetric: max |S - S*| = {asymmetry:e}")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive definite: pivot {index} = {pivot:e}")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("diffusion Gram matrix sigma_S sigma_S* is singular at t = {t}")]
    SingularDiffusion { t: f64 },

    #[error("F00 = {value:e} at t = {t}; the objective is degenerate")]
    NonPositiveF00 { t: f64, value: f64 },

    #[error("time {t} is outside [0, {horizon}]")]
    OutOfRange { t: f64, horizon: f64 },

    #[error("value-function terms F~, G~, g were not solved")]
    MissingValueTerms,

    #[error("{what}: expected dimension {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("table covers years [{table_start}, {table_end}] but [{start}, {end}] is required")]
    Coverage {
        start: f64,
        end: f64,
        table_start: f64,
        table_end: f64,
    },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn check_dim(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            found,
        })
    }
}
