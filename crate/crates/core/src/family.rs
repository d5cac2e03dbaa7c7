//! Exponential-family response distributions and their link functions.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FamilyKind {
    BinomialLogit,
    BinomialProbit,
    PoissonLog,
    GaussianIdentity,
}

impl FamilyKind {
    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::BinomialLogit => "binomial-logit",
            FamilyKind::BinomialProbit => "binomial-probit",
            FamilyKind::PoissonLog => "poisson-log",
            FamilyKind::GaussianIdentity => "gaussian-identity",
        }
    }

    pub fn is_binomial(self) -> bool {
        matches!(self, FamilyKind::BinomialLogit | FamilyKind::BinomialProbit)
    }
}

/// A response family together with its dispersion handling.
///
/// `dispersion` is the known scale φ₀ for the Gaussian family; `None` means
/// the variance is unknown and integrated out. `overdispersed` requests the
/// deviance-based marginal likelihood for binomial and Poisson responses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Family {
    pub kind: FamilyKind,
    pub dispersion: Option<f64>,
    pub overdispersed: bool,
}

impl Family {
    pub fn new(kind: FamilyKind, dispersion: Option<f64>, overdispersed: bool) -> Result<Self> {
        if let Some(phi) = dispersion {
            if !(phi > 0.0 && phi.is_finite()) {
                return Err(Error::Validation(format!(
                    "dispersion must be positive and finite, got {phi}"
                )));
            }
            if kind != FamilyKind::GaussianIdentity {
                return Err(Error::Validation(format!(
                    "a fixed dispersion applies only to the Gaussian family, not {}",
                    kind.name()
                )));
            }
        }
        if overdispersed && kind == FamilyKind::GaussianIdentity {
            return Err(Error::Validation(
                "over-dispersion applies to binomial and Poisson families".into(),
            ));
        }
        Ok(Family {
            kind,
            dispersion,
            overdispersed,
        })
    }

    pub fn logistic() -> Self {
        Family {
            kind: FamilyKind::BinomialLogit,
            dispersion: None,
            overdispersed: false,
        }
    }

    pub fn probit() -> Self {
        Family {
            kind: FamilyKind::BinomialProbit,
            dispersion: None,
            overdispersed: false,
        }
    }

    pub fn poisson() -> Self {
        Family {
            kind: FamilyKind::PoissonLog,
            dispersion: None,
            overdispersed: false,
        }
    }

    pub fn gaussian(dispersion: Option<f64>) -> Self {
        Family {
            kind: FamilyKind::GaussianIdentity,
            dispersion,
            overdispersed: false,
        }
    }

    /// Gaussian response with the variance integrated out.
    pub fn unknown_variance(&self) -> bool {
        self.kind == FamilyKind::GaussianIdentity && self.dispersion.is_none()
    }

    fn phi(&self) -> f64 {
        self.dispersion.unwrap_or(1.0)
    }

    /// Factor `c` with `Δdeviance = −2c·Δloglik` for [`Family::loglik`].
    pub(crate) fn deviance_scale(&self) -> f64 {
        match self.kind {
            FamilyKind::GaussianIdentity => self.phi(),
            _ => 1.0,
        }
    }

    pub fn linkinv(&self, eta: f64) -> f64 {
        match self.kind {
            FamilyKind::BinomialLogit => logistic(eta),
            FamilyKind::BinomialProbit => 0.5 * erfc(-eta / std::f64::consts::SQRT_2),
            FamilyKind::PoissonLog => eta.exp(),
            FamilyKind::GaussianIdentity => eta,
        }
    }

    /// Log-likelihood contribution up to terms free of η. For binomial
    /// families `y` is a success count out of `w` trials; otherwise `w` is a
    /// prior weight.
    pub fn loglik(&self, y: f64, w: f64, eta: f64) -> f64 {
        match self.kind {
            FamilyKind::BinomialLogit => y * eta - w * softplus(eta),
            FamilyKind::BinomialProbit => {
                let a = if y > 0.0 { y * log_ndtr(eta) } else { 0.0 };
                let b = if w - y > 0.0 { (w - y) * log_ndtr(-eta) } else { 0.0 };
                a + b
            }
            FamilyKind::PoissonLog => w * (y * eta - eta.exp()),
            FamilyKind::GaussianIdentity => -w * (y - eta).powi(2) / (2.0 * self.phi()),
        }
    }

    /// Derivative of the log-likelihood contribution with respect to η.
    pub fn score(&self, y: f64, w: f64, eta: f64) -> f64 {
        match self.kind {
            FamilyKind::BinomialLogit => y - w * logistic(eta),
            FamilyKind::BinomialProbit => y * mills(eta) - (w - y) * mills(-eta),
            FamilyKind::PoissonLog => w * (y - eta.exp()),
            FamilyKind::GaussianIdentity => w * (y - eta) / self.phi(),
        }
    }

    /// Expected information with respect to η, used for Fisher scoring.
    pub fn fisher_weight(&self, w: f64, eta: f64) -> f64 {
        match self.kind {
            FamilyKind::BinomialLogit => {
                let p = logistic(eta);
                w * p * logistic(-eta)
            }
            FamilyKind::BinomialProbit => {
                let log_phi = -0.5 * eta * eta - 0.5 * (2.0 * PI).ln();
                w * (2.0 * log_phi - log_ndtr(eta) - log_ndtr(-eta)).exp()
            }
            FamilyKind::PoissonLog => w * eta.exp(),
            FamilyKind::GaussianIdentity => w / self.phi(),
        }
    }

    /// Observed information `−∂²ℓ/∂η²`.
    pub fn observed_info(&self, y: f64, w: f64, eta: f64) -> f64 {
        match self.kind {
            FamilyKind::BinomialProbit => {
                let l1 = mills(eta);
                let l2 = mills(-eta);
                let a = if y > 0.0 { y * l1 * (eta + l1) } else { 0.0 };
                let b = if w - y > 0.0 { (w - y) * l2 * (l2 - eta) } else { 0.0 };
                a + b
            }
            _ => self.fisher_weight(w, eta),
        }
    }

    /// Unit deviance contribution `2(ℓ_sat − ℓ)` at mean `mu`.
    pub fn unit_deviance(&self, y: f64, w: f64, mu: f64) -> f64 {
        match self.kind {
            FamilyKind::BinomialLogit | FamilyKind::BinomialProbit => {
                let fitted = w * mu;
                2.0 * (xlogy_ratio(y, fitted) + xlogy_ratio(w - y, w - fitted))
            }
            FamilyKind::PoissonLog => 2.0 * w * (xlogy_ratio(y, mu) - (y - mu)),
            FamilyKind::GaussianIdentity => w * (y - mu).powi(2),
        }
    }
}

fn xlogy_ratio(a: f64, b: f64) -> f64 {
    if a <= 0.0 {
        0.0
    } else {
        a * (a / b).ln()
    }
}

pub fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + eᵗ)` without overflow.
pub fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// `log Φ(t)` for the standard normal CDF, accurate far into the lower tail.
pub fn log_ndtr(t: f64) -> f64 {
    if t > -20.0 {
        (0.5 * erfc(-t / std::f64::consts::SQRT_2)).ln()
    } else {
        let t2 = t * t;
        -0.5 * t2 - (-t).ln() - 0.5 * (2.0 * PI).ln() + asymptotic_tail(t2).ln()
    }
}

// 1 − 1/t² + 3/t⁴ − 15/t⁶ + … for Φ(t)·(−t)/φ(t).
fn asymptotic_tail(t2: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..8 {
        term *= -((2 * k - 1) as f64) / t2;
        sum += term;
    }
    sum
}

/// Inverse Mills ratio `φ(t)/Φ(t)`.
pub fn mills(t: f64) -> f64 {
    if t < -25.0 {
        -t / asymptotic_tail(t * t)
    } else {
        let log_phi = -0.5 * t * t - 0.5 * (2.0 * PI).ln();
        (log_phi - log_ndtr(t)).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mills_ratio_is_continuous_across_branch() {
        let a = mills(-25.0 + 1e-9);
        let b = mills(-25.0 - 1e-9);
        assert!((a - b).abs() / a < 1e-8);
        assert!((mills(0.0) - (2.0 / PI).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn log_ndtr_branches_agree() {
        let a = log_ndtr(-20.0 + 1e-12);
        let b = log_ndtr(-20.0 - 1e-12);
        assert!((a - b).abs() / a.abs() < 1e-10);
    }

    #[test]
    fn probit_observed_info_matches_finite_difference() {
        let f = Family::probit();
        for &(y, m, eta) in &[(3.0, 5.0, 0.4), (0.0, 2.0, -1.3), (7.0, 7.0, 2.2), (1.0, 4.0, -30.0)] {
            let h = 1e-5;
            let fd = -(f.score(y, m, eta + h) - f.score(y, m, eta - h)) / (2.0 * h);
            let d = f.observed_info(y, m, eta);
            assert!((fd - d).abs() <= 1e-6 * d.abs().max(1.0), "{y} {m} {eta}: {fd} vs {d}");
        }
    }

    #[test]
    fn dispersion_rules() {
        assert!(Family::new(FamilyKind::PoissonLog, Some(2.0), false).is_err());
        assert!(Family::new(FamilyKind::GaussianIdentity, None, true).is_err());
        assert!(Family::new(FamilyKind::GaussianIdentity, Some(-1.0), false).is_err());
    }
}
