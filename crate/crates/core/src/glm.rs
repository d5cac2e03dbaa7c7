//! Maximum-likelihood fitting of GLMs by iteratively reweighted least squares
//! and the per-model summaries needed for test-based Bayes factors.
//!
//! Every model contains an intercept. The covariate block is handled through
//! its numerical rank: aliased columns are dropped for fitting, and the
//! reported coefficients are the minimum-norm solution over all requested
//! columns, so fitted values and likelihoods do not depend on redundancy.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{Family, FamilyKind};
use crate::linalg::{center, pivoted_rank, select_columns, solve_spd, weighted_gram, weighted_means};

pub const MAX_ITERATIONS: usize = 100;
pub const MAX_STEP_HALVINGS: usize = 30;
pub const DEVIANCE_TOL: f64 = 1e-8;
pub const RANK_TOL: f64 = 1e-10;
const SEPARATION_INFO: f64 = 1e-10;
const SEPARATION_ETA: f64 = 30.0;

/// Response, covariates and per-observation weights.
///
/// For binomial families `weights` holds the number of trials and `y` the
/// success counts; otherwise `weights` are prior weights (default one).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub names: Vec<String>,
    pub weights: DVector<f64>,
    pub offset: Option<DVector<f64>>,
}

impl Dataset {
    pub fn new(y: DVector<f64>, x: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        let n = y.len();
        if x.nrows() != n {
            return Err(Error::Validation(format!(
                "response has {n} rows but design has {}",
                x.nrows()
            )));
        }
        if names.len() != x.ncols() {
            return Err(Error::Validation(format!(
                "{} names for {} columns",
                names.len(),
                x.ncols()
            )));
        }
        if n < 3 {
            return Err(Error::Validation(format!("need at least 3 observations, got {n}")));
        }
        if !y.iter().chain(x.iter()).all(|v| v.is_finite()) {
            return Err(Error::Validation("response and design must be finite".into()));
        }
        Ok(Dataset {
            y,
            x,
            names,
            weights: DVector::from_element(n, 1.0),
            offset: None,
        })
    }

    /// Dataset with generated names `x1, x2, …`.
    pub fn unnamed(y: DVector<f64>, x: DMatrix<f64>) -> Result<Self> {
        let names = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
        Dataset::new(y, x, names)
    }

    pub fn with_weights(mut self, weights: DVector<f64>) -> Result<Self> {
        if weights.len() != self.n() {
            return Err(Error::Validation("weights length differs from response".into()));
        }
        if !weights.iter().all(|w| *w > 0.0 && w.is_finite()) {
            return Err(Error::Validation("weights must be positive and finite".into()));
        }
        self.weights = weights;
        Ok(self)
    }

    pub fn with_offset(mut self, offset: DVector<f64>) -> Result<Self> {
        if offset.len() != self.n() {
            return Err(Error::Validation("offset length differs from response".into()));
        }
        if !offset.iter().all(|v| v.is_finite()) {
            return Err(Error::Validation("offset must be finite".into()));
        }
        self.offset = Some(offset);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    fn offset_at(&self, i: usize) -> f64 {
        self.offset.as_ref().map_or(0.0, |o| o[i])
    }

    /// Check that the response is admissible for `family`.
    pub fn validate_for(&self, family: &Family) -> Result<()> {
        match family.kind {
            FamilyKind::BinomialLogit | FamilyKind::BinomialProbit => {
                for (y, m) in self.y.iter().zip(self.weights.iter()) {
                    if *y < 0.0 || *y > *m {
                        return Err(Error::Validation(format!(
                            "binomial response {y} outside [0, {m}]"
                        )));
                    }
                }
            }
            FamilyKind::PoissonLog => {
                if self.y.iter().any(|y| *y < 0.0) {
                    return Err(Error::Validation("Poisson response must be non-negative".into()));
                }
            }
            FamilyKind::GaussianIdentity => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Separation {
    None,
    Quasi,
    Complete,
}

/// Maximum-likelihood fit of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct GlmFit {
    /// Requested covariate columns, ascending.
    pub columns: Vec<usize>,
    /// Subset of `columns` retained after rank detection.
    pub kept: Vec<usize>,
    pub intercept: f64,
    /// Minimum-norm coefficients aligned with `columns`.
    pub beta: DVector<f64>,
    /// Intercept of the fit on the retained columns.
    pub intercept_kept: f64,
    pub beta_kept: DVector<f64>,
    pub eta: DVector<f64>,
    pub mu: DVector<f64>,
    pub loglik: f64,
    pub deviance: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Observed information `dᵢ` with respect to ηᵢ at the MLE.
    pub obs_info: DVector<f64>,
    pub separation: Separation,
}

impl GlmFit {
    pub fn rank(&self) -> usize {
        self.kept.len()
    }
}

fn loglik_at(data: &Dataset, family: &Family, eta: &DVector<f64>) -> f64 {
    (0..data.n())
        .map(|i| family.loglik(data.y[i], data.weights[i], eta[i]))
        .sum()
}

fn deviance_at(data: &Dataset, family: &Family, eta: &DVector<f64>) -> f64 {
    (0..data.n())
        .map(|i| family.unit_deviance(data.y[i], data.weights[i], family.linkinv(eta[i])))
        .sum()
}

fn starting_eta(data: &Dataset, family: &Family) -> DVector<f64> {
    DVector::from_fn(data.n(), |i, _| {
        let y = data.y[i];
        let m = data.weights[i];
        let off = data.offset_at(i);
        match family.kind {
            FamilyKind::BinomialLogit => {
                let p = (y + 0.5) / (m + 1.0);
                (p / (1.0 - p)).ln()
            }
            FamilyKind::BinomialProbit => {
                use statrs::distribution::{ContinuousCDF, Normal};
                let p = (y + 0.5) / (m + 1.0);
                Normal::standard().inverse_cdf(p)
            }
            FamilyKind::PoissonLog => (y + 0.1).ln().max(off - 20.0),
            FamilyKind::GaussianIdentity => y,
        }
    })
}

fn design(data: &Dataset, columns: &[usize]) -> DMatrix<f64> {
    let n = data.n();
    DMatrix::from_fn(n, columns.len() + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            data.x[(i, columns[j - 1])]
        }
    })
}

fn linear_predictor(data: &Dataset, z: &DMatrix<f64>, coef: &DVector<f64>) -> DVector<f64> {
    let mut eta = z * coef;
    if let Some(off) = &data.offset {
        eta += off;
    }
    eta
}

/// One weighted least-squares update with weights `w` and scores `s`:
/// `coef + (ZᵀWZ)⁻¹ Zᵀs`.
fn newton_step(
    z: &DMatrix<f64>,
    coef: &DVector<f64>,
    w: &DVector<f64>,
    s: &DVector<f64>,
) -> Option<DVector<f64>> {
    let info = weighted_gram(z, w);
    let grad = z.transpose() * s;
    solve_spd(&info, &grad).map(|delta| coef + delta)
}

/// Fit the model with the given covariate columns (plus intercept).
pub fn fit_glm(data: &Dataset, family: &Family, columns: &[usize]) -> Result<GlmFit> {
    let mut columns = columns.to_vec();
    columns.sort_unstable();
    columns.dedup();
    if let Some(&bad) = columns.iter().find(|&&c| c >= data.p()) {
        return Err(Error::Validation(format!(
            "column {bad} out of range for {} covariates",
            data.p()
        )));
    }
    let label = model_label(&columns);
    let xm = select_columns(&data.x, &columns);
    let means = DVector::from_fn(columns.len(), |j, _| xm.column(j).mean());
    let (_, kept_local) = pivoted_rank(&center(&xm, &means), RANK_TOL);
    let kept: Vec<usize> = kept_local.iter().map(|&j| columns[j]).collect();

    let z = design(data, &kept);
    let n = data.n();
    let k = z.ncols();

    // The first update regresses on the working response of a per-observation start.
    let eta0 = starting_eta(data, family);
    let w0 = DVector::from_fn(n, |i, _| family.fisher_weight(data.weights[i], eta0[i]).max(1e-12));
    let s0 = DVector::from_fn(n, |i, _| family.score(data.y[i], data.weights[i], eta0[i]));
    let base = DVector::from_fn(n, |i, _| eta0[i] - data.offset_at(i));
    let info0 = weighted_gram(&z, &w0);
    let rhs0 = z.transpose() * DVector::from_fn(n, |i, _| w0[i] * base[i] + s0[i]);
    let mut coef = solve_spd(&info0, &rhs0).ok_or_else(|| {
        Error::Numeric(format!("singular information matrix at start for model {label}"))
    })?;
    let mut eta = linear_predictor(data, &z, &coef);
    let mut ll = loglik_at(data, family, &eta);
    let mut dev = deviance_at(data, family, &eta);
    if !ll.is_finite() {
        coef = DVector::zeros(k);
        eta = linear_predictor(data, &z, &coef);
        ll = loglik_at(data, family, &eta);
        dev = deviance_at(data, family, &eta);
    }

    let mut iterations = 1;
    let mut converged = false;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let w = DVector::from_fn(n, |i, _| family.fisher_weight(data.weights[i], eta[i]));
        let s = DVector::from_fn(n, |i, _| family.score(data.y[i], data.weights[i], eta[i]));
        let Some(mut proposal) = newton_step(&z, &coef, &w, &s) else {
            break;
        };
        let mut new_eta = linear_predictor(data, &z, &proposal);
        let mut new_ll = loglik_at(data, family, &new_eta);
        let mut halvings = 0;
        while !(new_ll.is_finite() && new_ll >= ll - 1e-12 * ll.abs()) && halvings < MAX_STEP_HALVINGS {
            proposal = (&proposal + &coef) * 0.5;
            new_eta = linear_predictor(data, &z, &proposal);
            new_ll = loglik_at(data, family, &new_eta);
            halvings += 1;
        }
        if !new_ll.is_finite() {
            break;
        }
        let new_dev = dev - 2.0 * family.deviance_scale() * (new_ll - ll);
        let change = (new_dev - dev).abs() / (new_dev.abs() + 0.1);
        coef = proposal;
        eta = new_eta;
        ll = new_ll;
        dev = new_dev;
        if change < DEVIANCE_TOL {
            converged = true;
            break;
        }
    }

    if converged {
        // Polish with exact Newton steps on the observed information.
        for _ in 0..3 {
            let d = DVector::from_fn(n, |i, _| family.observed_info(data.y[i], data.weights[i], eta[i]));
            let s = DVector::from_fn(n, |i, _| family.score(data.y[i], data.weights[i], eta[i]));
            let Some(proposal) = newton_step(&z, &coef, &d, &s) else { break };
            let step = (&proposal - &coef).amax();
            let new_eta = linear_predictor(data, &z, &proposal);
            let new_ll = loglik_at(data, family, &new_eta);
            if !(new_ll.is_finite() && new_ll >= ll - 1e-10 * ll.abs().max(1.0)) {
                break;
            }
            coef = proposal;
            eta = new_eta;
            ll = new_ll;
            if step <= 1e-14 * coef.amax().max(1.0) {
                break;
            }
        }
    }
    dev = deviance_at(data, family, &eta);

    let obs_info = DVector::from_fn(n, |i, _| family.observed_info(data.y[i], data.weights[i], eta[i]));
    let separation = if family.kind.is_binomial() {
        detect_separation(&obs_info, &eta)
    } else {
        Separation::None
    };
    if !converged && separation == Separation::None {
        return Err(Error::NonConvergence {
            model: label,
            iterations,
        });
    }

    let intercept_kept = coef[0];
    let beta_kept = coef.rows(1, k - 1).clone_owned();
    let (intercept, beta) = expand_min_norm(&xm, &columns, &kept, intercept_kept, &beta_kept);
    let mu = eta.map(|e| family.linkinv(e));
    Ok(GlmFit {
        columns,
        kept,
        intercept,
        beta,
        intercept_kept,
        beta_kept,
        eta,
        mu,
        loglik: ll,
        deviance: dev,
        iterations,
        converged,
        obs_info,
        separation,
    })
}

/// Map the fit on retained columns to the minimum-norm coefficient vector
/// over all requested columns with the same fitted values.
fn expand_min_norm(
    xm: &DMatrix<f64>,
    columns: &[usize],
    kept: &[usize],
    intercept_kept: f64,
    beta_kept: &DVector<f64>,
) -> (f64, DVector<f64>) {
    let k = columns.len();
    if kept.len() == k {
        return (intercept_kept, beta_kept.clone());
    }
    let means = DVector::from_fn(k, |j, _| xm.column(j).mean());
    let xc = center(xm, &means);
    let mut fitted = DVector::zeros(xm.nrows());
    for (b, col) in beta_kept.iter().zip(kept) {
        let j = columns.iter().position(|c| c == col).expect("kept column is requested");
        fitted += xc.column(j) * *b;
    }
    let pinv = xc
        .clone()
        .pseudo_inverse(1e-12)
        .expect("SVD of a finite matrix succeeds");
    let beta = pinv * fitted;
    let mean_kept: f64 = beta_kept
        .iter()
        .zip(kept)
        .map(|(b, col)| b * means[columns.iter().position(|c| c == col).unwrap()])
        .sum();
    let intercept = intercept_kept + mean_kept - means.dot(&beta);
    (intercept, beta)
}

/// Observed information `dᵢ` at a linear predictor `eta`.
pub fn observed_info_eta(data: &Dataset, family: &Family, eta: &DVector<f64>) -> Result<DVector<f64>> {
    if eta.len() != data.n() {
        return Err(Error::Validation("linear predictor length differs from response".into()));
    }
    let d = DVector::from_fn(data.n(), |i, _| family.observed_info(data.y[i], data.weights[i], eta[i]));
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("observed information is not finite".into()));
    }
    Ok(d)
}

/// Center columns at their `d`-weighted means, so that `1ᵀ diag(d) X_c = 0`.
pub fn weighted_center(x: &DMatrix<f64>, d: &DVector<f64>) -> Result<DMatrix<f64>> {
    let total = d.sum();
    if !(total > 0.0) {
        return Err(Error::Numeric("total information is zero; centering is undefined".into()));
    }
    Ok(center(x, &weighted_means(x, d)))
}

/// Numerical rank of a centered design.
pub fn effective_rank(xc: &DMatrix<f64>) -> usize {
    pivoted_rank(xc, RANK_TOL).0
}

/// Classify (quasi-)complete separation from the observed information.
pub fn detect_separation(obs_info: &DVector<f64>, eta: &DVector<f64>) -> Separation {
    let flat: Vec<usize> = (0..obs_info.len())
        .filter(|&i| obs_info[i] < SEPARATION_INFO)
        .collect();
    if flat.len() == obs_info.len() {
        Separation::Complete
    } else if flat.iter().any(|&i| eta[i].abs() > SEPARATION_ETA) {
        Separation::Quasi
    } else {
        Separation::None
    }
}

pub fn model_label(columns: &[usize]) -> String {
    if columns.is_empty() {
        "{}".to_string()
    } else {
        let parts: Vec<String> = columns.iter().map(|c| c.to_string()).collect();
        format!("{{{}}}", parts.join(","))
    }
}

/// Information-weighted summaries of a fit: `J_α = Σ dᵢ`, the weighted
/// covariate means `x̄_J`, `J_β = X_cᵀ D X_c` and `Q = β̂ᵀ J_β β̂`, all on the
/// retained columns.
#[derive(Debug, Clone, PartialEq)]
pub struct InformationSummary {
    pub j_alpha: f64,
    pub xbar: DVector<f64>,
    pub j_beta: DMatrix<f64>,
    pub q: f64,
    /// Intercept at the weighted covariate means, `α̂ + x̄_Jᵀβ̂`.
    pub alpha_centered: f64,
}

pub fn information_summary(data: &Dataset, fit: &GlmFit) -> InformationSummary {
    let d = &fit.obs_info;
    let j_alpha = d.sum();
    let xk = select_columns(&data.x, &fit.kept);
    let xbar = weighted_means(&xk, d);
    let xc = center(&xk, &xbar);
    let j_beta = weighted_gram(&xc, d);
    let v = &xc * &fit.beta_kept;
    let q = v.iter().zip(d.iter()).map(|(vi, di)| di * vi * vi).sum();
    let alpha_centered = fit.intercept_kept + xbar.dot(&fit.beta_kept);
    InformationSummary {
        j_alpha,
        xbar,
        j_beta,
        q,
        alpha_centered,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logistic_data() -> Dataset {
        let x = DMatrix::from_column_slice(
            10,
            1,
            &[-2.0, -1.5, -1.0, -0.5, 0.0, 0.3, 0.8, 1.1, 1.7, 2.4],
        );
        let y = DVector::from_vec(vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0]);
        Dataset::unnamed(y, x).unwrap()
    }

    #[test]
    fn logistic_score_vanishes_at_mle() {
        let data = logistic_data();
        let f = Family::logistic();
        let fit = fit_glm(&data, &f, &[0]).unwrap();
        assert!(fit.converged);
        let resid: Vec<f64> = (0..10).map(|i| data.y[i] - fit.mu[i]).collect();
        let s0: f64 = resid.iter().sum();
        let s1: f64 = resid.iter().zip(data.x.column(0).iter()).map(|(r, x)| r * x).sum();
        assert!(s0.abs() < 1e-12 && s1.abs() < 1e-12);
    }

    #[test]
    fn null_model_matches_closed_form() {
        let data = logistic_data();
        let fit = fit_glm(&data, &Family::logistic(), &[]).unwrap();
        let p = 0.5f64;
        assert!((fit.intercept - (p / (1.0 - p)).ln()).abs() < 1e-12);
    }

    #[test]
    fn complete_separation_is_flagged() {
        let x = DMatrix::from_column_slice(6, 1, &[-3.0, -2.0, -1.0, 1.0, 2.0, 3.0]);
        let y = DVector::from_vec(vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let data = Dataset::unnamed(y, x).unwrap();
        let fit = fit_glm(&data, &Family::logistic(), &[0]).unwrap();
        assert_eq!(fit.separation, Separation::Complete);
    }

    #[test]
    fn duplicated_column_gives_same_fit() {
        let base = logistic_data();
        let mut x = DMatrix::zeros(10, 2);
        x.set_column(0, &base.x.column(0));
        x.set_column(1, &base.x.column(0));
        let data = Dataset::unnamed(base.y.clone(), x).unwrap();
        let a = fit_glm(&base, &Family::logistic(), &[0]).unwrap();
        let b = fit_glm(&data, &Family::logistic(), &[0, 1]).unwrap();
        assert_eq!(b.rank(), 1);
        assert!((a.loglik - b.loglik).abs() < 1e-12);
        assert!((b.beta[0] - b.beta[1]).abs() < 1e-10);
        assert!((a.beta[0] - 2.0 * b.beta[0]).abs() < 1e-10);
        assert!((a.intercept - b.intercept).abs() < 1e-10);
    }

    #[test]
    fn gaussian_fit_is_least_squares() {
        let data = logistic_data();
        let fit = fit_glm(&data, &Family::gaussian(None), &[0]).unwrap();
        let x = data.x.column(0);
        let xm = x.mean();
        let ym = data.y.mean();
        let sxy: f64 = x.iter().zip(data.y.iter()).map(|(a, b)| (a - xm) * (b - ym)).sum();
        let sxx: f64 = x.iter().map(|a| (a - xm).powi(2)).sum();
        assert!((fit.beta[0] - sxy / sxx).abs() < 1e-13);
    }
}
