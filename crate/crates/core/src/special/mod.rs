//! Log-stable special functions used by tCCH normalizers and closed-form
//! marginal likelihoods.
//!
//! Every function returns a [`LogValue`] so that factors such as `exp(s/v)`
//! with `s = O(n)` never overflow. Two independent backends are available:
//! power series and adaptive Gauss–Kronrod quadrature of the Euler-type
//! integral representation. Quadrature is the default; the series backend is
//! kept as a cross-check on the domain where it converges quickly.
//!
//! The Humbert function follows Gordy's convention,
//! `Φ₁(α, β, γ, x, y) = B(γ−α, α)⁻¹ ∫₀¹ u^{α−1}(1−u)^{γ−α−1}(1−yu)^{−β}e^{xu} du`,
//! which differs from the Gradshteyn–Ryzhik ordering of arguments.

mod gamma;
mod hyper;
pub mod quad;

use thiserror::Error;

pub use gamma::{ln_beta, ln_gamma, log_lower_incomplete_gamma};
pub use hyper::{
    log_appell_f1, log_appell_f1_with, log_gauss_2f1, log_gauss_2f1_with, log_humbert_phi1,
    log_humbert_phi1_with, log_kummer_1f1, log_kummer_1f1_with,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecialError {
    #[error("{function}: argument outside domain ({detail})")]
    Domain {
        function: &'static str,
        detail: String,
    },
    #[error("{function}: series did not converge within {terms} terms")]
    NoConvergence { function: &'static str, terms: usize },
    #[error("quadrature failed on [{lo}, {hi}]: estimated relative error {rel_err:e}")]
    Quadrature { lo: f64, hi: f64, rel_err: f64 },
    #[error("invalid evaluation strategy: {0}")]
    Strategy(String),
}

/// A real number stored as `sign · exp(log_magnitude)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogValue {
    pub log_magnitude: f64,
    pub sign: f64,
}

impl LogValue {
    pub const ONE: LogValue = LogValue {
        log_magnitude: 0.0,
        sign: 1.0,
    };
    pub const ZERO: LogValue = LogValue {
        log_magnitude: f64::NEG_INFINITY,
        sign: 1.0,
    };

    pub fn positive(log_magnitude: f64) -> Self {
        LogValue {
            log_magnitude,
            sign: 1.0,
        }
    }

    pub fn from_f64(x: f64) -> Self {
        LogValue {
            log_magnitude: x.abs().ln(),
            sign: if x < 0.0 { -1.0 } else { 1.0 },
        }
    }

    pub fn value(&self) -> f64 {
        self.sign * self.log_magnitude.exp()
    }

    pub fn is_positive(&self) -> bool {
        self.sign > 0.0 && self.log_magnitude > f64::NEG_INFINITY
    }

    /// Log of the value; `NaN` when the value is negative.
    pub fn ln(&self) -> f64 {
        if self.sign > 0.0 {
            self.log_magnitude
        } else {
            f64::NAN
        }
    }

    pub fn scale_log(self, log_factor: f64) -> LogValue {
        LogValue {
            log_magnitude: self.log_magnitude + log_factor,
            sign: self.sign,
        }
    }

    /// Relative difference `|a − b| / max(|a|, |b|)` computed without
    /// leaving log space where possible.
    pub fn rel_diff(&self, other: &LogValue) -> f64 {
        if self.sign == other.sign {
            let d = self.log_magnitude - other.log_magnitude;
            if d == 0.0 {
                return 0.0;
            }
            (-(d.abs())).exp_m1().abs()
        } else {
            2.0
        }
    }
}

/// Which backend to use for a special-function evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Series,
    Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalStrategy {
    pub backend: Backend,
    pub rel_tol: f64,
    pub max_terms: usize,
}

impl EvalStrategy {
    pub fn new(backend: Backend, rel_tol: f64, max_terms: usize) -> Result<Self, SpecialError> {
        if !(rel_tol > 0.0 && rel_tol <= 1e-4) {
            return Err(SpecialError::Strategy(format!(
                "rel_tol must lie in (0, 1e-4], got {rel_tol}"
            )));
        }
        if max_terms < 100 {
            return Err(SpecialError::Strategy(format!(
                "max_terms must be at least 100, got {max_terms}"
            )));
        }
        Ok(EvalStrategy {
            backend,
            rel_tol,
            max_terms,
        })
    }

    pub fn quadrature() -> Self {
        EvalStrategy {
            backend: Backend::Quadrature,
            rel_tol: 1e-12,
            max_terms: 1_000_000,
        }
    }

    pub fn series() -> Self {
        EvalStrategy {
            backend: Backend::Series,
            rel_tol: 1e-16,
            max_terms: 1_000_000,
        }
    }
}

impl Default for EvalStrategy {
    fn default() -> Self {
        EvalStrategy::quadrature()
    }
}

/// Numerically stable `log(exp(a) + exp(b))`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Numerically stable `log Σ exp(xᵢ)`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
