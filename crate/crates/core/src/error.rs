use thiserror::Error;

use crate::special::SpecialError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Special(#[from] SpecialError),
    #[error("complete separation in model {model}")]
    Separation { model: String },
    #[error("IRLS did not converge for model {model} after {iterations} iterations")]
    NonConvergence { model: String, iterations: usize },
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("effective sample size {ess:.1} is below the minimum of {min}")]
    LowEffectiveSampleSize { ess: f64, min: f64 },
    #[error("exhaustive enumeration refused for p = {p} (limit {limit}); use MCMC")]
    TooManyModels { p: usize, limit: usize },
}

impl Error {
    /// Whether the failure is numerical rather than a problem with inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Special(_)
                | Error::NonConvergence { .. }
                | Error::Numeric(_)
                | Error::LowEffectiveSampleSize { .. }
                | Error::Separation { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
