//! Log Bayes factors against the null model for every supported method.
//!
//! All quantities are on the log scale and relative to the intercept-only
//! model, so absolute marginal likelihood constants never appear. Models of
//! deficient rank use their rank `r_M` wherever a dimension enters.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::Family;
use crate::glm::{fit_glm, information_summary, model_label, Dataset, GlmFit, Separation};
use crate::linalg::{select_columns, weighted_means};
use crate::priors::{
    log_integral_against_kernel, posterior_update, resolve_prior, HyperRule, TcchParams,
};
use crate::special::{
    ln_beta, log_appell_f1, log_gauss_2f1, log_humbert_phi1, log_humbert_phi1_with,
    log_kummer_1f1, log_lower_incomplete_gamma, EvalStrategy,
};

/// Sufficient statistics of one model for every evidence method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelStats {
    pub n: usize,
    pub rank: usize,
    /// Wald statistic `Q_M = β̂ᵀ J_β β̂`.
    pub q: f64,
    /// Deviance statistic `z_M = 2(ℓ_M − ℓ_∅)`.
    pub z: f64,
    /// `log J_α(∅) − log J_α(M)`.
    pub log_j_alpha_ratio: f64,
    pub deviance: f64,
    pub null_deviance: f64,
    /// Weighted coefficient of determination; Gaussian families only.
    pub r_squared: Option<f64>,
    pub separation: Separation,
    pub generalized_inverse: bool,
}

impl ModelStats {
    /// Statistics from fitted summaries directly, mainly for fixtures.
    pub fn from_parts(n: usize, rank: usize, q: f64, z: f64, log_j_alpha_ratio: f64) -> Self {
        ModelStats {
            n,
            rank,
            q,
            z,
            log_j_alpha_ratio,
            deviance: f64::NAN,
            null_deviance: f64::NAN,
            r_squared: None,
            separation: Separation::None,
            generalized_inverse: false,
        }
    }
}

/// A fitted model with the coefficient summaries needed for averaging.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSummary {
    pub columns: Vec<usize>,
    pub stats: ModelStats,
    /// Minimum-norm MLE aligned with `columns`.
    pub beta: DVector<f64>,
    /// Information-weighted means of `columns`.
    pub xbar: DVector<f64>,
    /// Intercept at the weighted means, `α̂ + x̄ᵀβ̂`.
    pub alpha_centered: f64,
}

impl ModelSummary {
    /// Intercept of the shrunken linear predictor.
    pub fn shrunk_intercept(&self, shrink: f64) -> f64 {
        self.alpha_centered - shrink * self.xbar.dot(&self.beta)
    }
}

/// Fit a model and summarize it against a fitted null model.
pub fn summarize_model(
    data: &Dataset,
    family: &Family,
    columns: &[usize],
    null_fit: &GlmFit,
) -> Result<ModelSummary> {
    let fit = fit_glm(data, family, columns)?;
    summarize_fit(data, family, fit, null_fit)
}

pub fn summarize_fit(
    data: &Dataset,
    family: &Family,
    fit: GlmFit,
    null_fit: &GlmFit,
) -> Result<ModelSummary> {
    if fit.separation == Separation::Complete {
        return Err(Error::Separation {
            model: model_label(&fit.columns),
        });
    }
    let n = data.n();
    let info = information_summary(data, &fit);
    let null_info = information_summary(data, null_fit);
    let rank = fit.rank();
    let (z, r_squared) = if family.unknown_variance() {
        let r2 = if null_fit.deviance > 0.0 {
            (1.0 - fit.deviance / null_fit.deviance).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let z = if rank == 0 { 0.0 } else { -(n as f64) * (-r2).ln_1p() };
        (z, Some(r2))
    } else {
        let z = if rank == 0 { 0.0 } else { 2.0 * (fit.loglik - null_fit.loglik) };
        (z, None)
    };
    let q = if rank == 0 { 0.0 } else { info.q.max(0.0) };
    let stats = ModelStats {
        n,
        rank,
        q,
        z,
        log_j_alpha_ratio: null_info.j_alpha.ln() - info.j_alpha.ln(),
        deviance: fit.deviance,
        null_deviance: null_fit.deviance,
        r_squared,
        separation: fit.separation,
        generalized_inverse: rank < fit.columns.len(),
    };
    let xm = select_columns(&data.x, &fit.columns);
    let xbar = if fit.columns.is_empty() {
        DVector::zeros(0)
    } else {
        weighted_means(&xm, &fit.obs_info)
    };
    let alpha_centered = fit.intercept + xbar.dot(&fit.beta);
    Ok(ModelSummary {
        columns: fit.columns,
        stats,
        beta: fit.beta,
        xbar,
        alpha_centered,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub used_generalized_inverse: bool,
    pub separation_quasi: bool,
    pub laplace: bool,
    pub numeric_warning: bool,
    /// Evidence is defined only up to a constant shared across models.
    pub improper_prior: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub columns: Vec<usize>,
    pub rank: usize,
    pub log_bf_vs_null: f64,
    pub method: HyperRule,
    pub prior: Option<TcchParams>,
    pub u_posterior: Option<TcchParams>,
    /// Posterior mean of `g/(1+g)` (one for information criteria).
    pub shrink_mean: f64,
    /// The value of `g` used by fixed-`g` and empirical-Bayes methods.
    pub g: Option<f64>,
    pub diagnostics: Diagnostics,
}

/// Fixed-`g` data-based Bayes factor under the integrated Laplace approximation.
pub fn log_bf_fixed_g(stats: &ModelStats, g: f64) -> f64 {
    if stats.rank == 0 {
        return 0.0;
    }
    let r = stats.rank as f64;
    0.5 * stats.z + 0.5 * stats.log_j_alpha_ratio - 0.5 * r * g.ln_1p() - stats.q / (2.0 * (1.0 + g))
}

/// Test-based Bayes factor from the deviance statistic with fixed `g`.
pub fn log_tbf(z: f64, p_m: usize, g: f64) -> f64 {
    if p_m == 0 {
        return 0.0;
    }
    -0.5 * p_m as f64 * g.ln_1p() + g * z / (2.0 * (1.0 + g))
}

/// Local empirical-Bayes `ĝ = max(Q/r − 1, 0)`.
pub fn local_eb_g(stats: &ModelStats) -> f64 {
    if stats.rank == 0 {
        0.0
    } else {
        (stats.q / stats.rank as f64 - 1.0).max(0.0)
    }
}

/// `−IC/2` relative to the null model.
pub fn ic_log_score(stats: &ModelStats, bic: bool) -> f64 {
    let r = stats.rank as f64;
    let penalty = if bic { 0.5 * r * (stats.n as f64).ln() } else { r };
    0.5 * stats.z - penalty
}

/// tCCH Bayes factor; returns the value and the posterior mixing law.
///
/// Improper priors (`a = 0`) drop the prior normalizer, which is shared by
/// all models, so only comparisons among non-null models are meaningful.
pub fn log_bf_tcch(stats: &ModelStats, prior: &TcchParams) -> Result<(f64, TcchParams)> {
    let post = posterior_update(prior, stats.rank, stats.q);
    if stats.rank == 0 && prior.is_proper() {
        return Ok((0.0, post));
    }
    let z_prior = if prior.is_proper() { prior.log_normalizer()? } else { 0.0 };
    let z_post = post.log_normalizer()?;
    Ok((0.5 * stats.log_j_alpha_ratio + 0.5 * stats.z + z_post - z_prior, post))
}

/// Closed form under the default robust prior via the lower incomplete gamma.
pub fn log_bf_robust_closed_form(stats: &ModelStats) -> Result<f64> {
    if stats.rank == 0 {
        return Ok(0.0);
    }
    let n = stats.n as f64;
    let p = stats.rank as f64;
    let v = (n + 1.0) / (p + 1.0);
    let a = 0.5 * (p + 1.0);
    let half_q = 0.5 * stats.q;
    let tail = if half_q > 0.0 {
        log_lower_incomplete_gamma(a, half_q / v)?.ln() - a * half_q.ln()
    } else {
        -a * v.ln() - a.ln()
    };
    Ok(0.5 * stats.log_j_alpha_ratio + 0.5 * stats.z + 0.5 * v.ln() + tail - std::f64::consts::LN_2)
}

/// Gaussian unknown-variance Bayes factor at fixed `g`.
pub fn log_bf_gaussian_fixed_g(r_squared: f64, n: usize, p_m: usize, g: f64) -> f64 {
    if p_m == 0 {
        return 0.0;
    }
    let n = n as f64;
    let p = p_m as f64;
    0.5 * (n - p - 1.0) * g.ln_1p() - 0.5 * (n - 1.0) * (g * (1.0 - r_squared)).ln_1p()
}

fn gaussian_log_h(r_squared: f64, n: usize) -> impl Fn(f64) -> f64 {
    let e = 0.5 * (n as f64 - 1.0);
    move |u: f64| -e * ((1.0 - r_squared) + r_squared * u).ln()
}

/// Gaussian unknown-variance tCCH Bayes factor by direct quadrature over `u`.
pub fn log_bf_gaussian_tcch_quadrature(
    r_squared: f64,
    n: usize,
    p_m: usize,
    prior: &TcchParams,
) -> Result<f64> {
    if p_m == 0 && prior.is_proper() {
        return Ok(0.0);
    }
    let shifted = prior.with_shifted_t(p_m as f64 / 2.0);
    let num = log_integral_against_kernel(&shifted, gaussian_log_h(r_squared, n))?;
    let den = if prior.is_proper() { prior.log_normalizer()? } else { 0.0 };
    Ok(num - den)
}

/// Gaussian unknown-variance tCCH Bayes factor in closed form where one is
/// available (`r = 0` or `κ = 1`; otherwise `s = 0`), else by quadrature.
pub fn log_bf_gaussian_tcch(r_squared: f64, n: usize, p_m: usize, prior: &TcchParams) -> Result<f64> {
    if !(0.0..=1.0).contains(&r_squared) {
        return Err(Error::Validation(format!("R² must lie in [0, 1], got {r_squared}")));
    }
    if p_m == 0 && prior.is_proper() {
        return Ok(0.0);
    }
    if r_squared == 1.0 {
        return Ok(f64::INFINITY);
    }
    if !prior.is_proper() {
        return log_bf_gaussian_tcch_quadrature(r_squared, n, p_m, prior);
    }
    let TcchParams { t, q, r, s, v, kappa } = *prior;
    let nf = n as f64;
    let hp = p_m as f64 / 2.0;
    let e = 0.5 * (nf - 1.0);
    let r2 = r_squared;
    if r == 0.0 || kappa == 1.0 {
        let y = r2 / (v - (v - 1.0) * r2);
        let phi = log_humbert_phi1(q, e, t + q + hp, s / v, y)?;
        let f11 = log_kummer_1f1(q, t + q, s / v)?;
        return Ok(ln_beta(t + hp, q) + phi.ln()
            - hp * v.ln()
            - e * (-(1.0 - 1.0 / v) * r2).ln_1p()
            - ln_beta(t, q)
            - f11.ln());
    }
    if s == 0.0 {
        let x = 1.0 - kappa;
        let y = 1.0 - kappa - r2 * kappa / ((1.0 - r2) * v);
        let f1 = log_appell_f1(t + hp, t + q + hp + 0.5 * (1.0 - nf) - r, e, t + q + hp, x, y)?;
        let f21 = log_gauss_2f1(r, q, t + q, x)?;
        return Ok((t + hp - r) * kappa.ln() + ln_beta(t + hp, q) + f1.ln()
            - hp * v.ln()
            - e * (-r2).ln_1p()
            - ln_beta(t, q)
            - f21.ln());
    }
    log_bf_gaussian_tcch_quadrature(r_squared, n, p_m, prior)
}

/// Posterior mean of `u` for the Gaussian unknown-variance mixture.
pub fn gaussian_u_posterior_mean(r_squared: f64, n: usize, p_m: usize, prior: &TcchParams) -> Result<f64> {
    let hp = p_m as f64 / 2.0;
    let h = gaussian_log_h(r_squared, n);
    let num = log_integral_against_kernel(&prior.with_shifted_t(hp + 1.0), &h)?;
    let den = log_integral_against_kernel(&prior.with_shifted_t(hp), &h)?;
    Ok((num - den).exp())
}

fn overdispersed_log_h(stats: &ModelStats) -> Result<impl Fn(f64) -> f64> {
    if !(stats.deviance > 0.0) || !(stats.null_deviance > 0.0) {
        return Err(Error::Numeric(
            "zero residual deviance makes the over-dispersed kernel unbounded".into(),
        ));
    }
    let e = 0.5 * (stats.n as f64 - 1.0);
    let (q, d) = (stats.q, stats.deviance);
    Ok(move |u: f64| -e * (u * q + d).ln())
}

/// Log of the over-dispersed marginal-likelihood kernel in `u`, relative to
/// the null model: `½log(J_α(∅)/J_α(M)) + (p/2)log u − ((n−1)/2)[log(uQ + D_M) − log D_∅]`.
pub fn log_marglik_overdispersed(stats: &ModelStats, u: f64) -> Result<f64> {
    let h = overdispersed_log_h(stats)?;
    let e = 0.5 * (stats.n as f64 - 1.0);
    Ok(0.5 * stats.log_j_alpha_ratio + 0.5 * stats.rank as f64 * u.ln() + h(u)
        + e * stats.null_deviance.ln())
}

/// Over-dispersed tCCH Bayes factor, integrating the kernel by quadrature.
pub fn log_bf_overdispersed_tcch(stats: &ModelStats, prior: &TcchParams) -> Result<f64> {
    let h = overdispersed_log_h(stats)?;
    if stats.rank == 0 && prior.is_proper() {
        return Ok(0.0);
    }
    let e = 0.5 * (stats.n as f64 - 1.0);
    let shifted = prior.with_shifted_t(stats.rank as f64 / 2.0);
    let num = log_integral_against_kernel(&shifted, h)?;
    let den = if prior.is_proper() { prior.log_normalizer()? } else { 0.0 };
    Ok(0.5 * stats.log_j_alpha_ratio + num - den + e * stats.null_deviance.ln())
}

fn overdispersed_u_posterior_mean(stats: &ModelStats, prior: &TcchParams) -> Result<f64> {
    let h = overdispersed_log_h(stats)?;
    let hp = stats.rank as f64 / 2.0;
    let num = log_integral_against_kernel(&prior.with_shifted_t(hp + 1.0), &h)?;
    let den = log_integral_against_kernel(&prior.with_shifted_t(hp), &h)?;
    Ok((num - den).exp())
}

/// Cross-check the posterior normalizer against the series backend when
/// that backend converges quickly.
fn phi1_disagrees(post: &TcchParams) -> bool {
    let x = post.s / post.v;
    let y = 1.0 - post.kappa;
    if x.abs() > 30.0 || y.abs() > 0.5 {
        return false;
    }
    let args = (post.q, post.r, post.t + post.q, x, y);
    let quad = log_humbert_phi1(args.0, args.1, args.2, args.3, args.4);
    let series = log_humbert_phi1_with(args.0, args.1, args.2, args.3, args.4, &EvalStrategy::series());
    match (quad, series) {
        (Ok(a), Ok(b)) => a.rel_diff(&b) > 1e-6,
        _ => true,
    }
}

/// Evidence for one model under `rule`. `p_total` is the number of
/// candidate predictors, needed by the benchmark prior.
pub fn compute_evidence(
    summary: &ModelSummary,
    family: &Family,
    rule: &HyperRule,
    p_total: usize,
) -> Result<Evidence> {
    let stats = &summary.stats;
    if stats.separation == Separation::Complete {
        return Err(Error::Separation {
            model: model_label(&summary.columns),
        });
    }
    let mut diagnostics = Diagnostics {
        used_generalized_inverse: stats.generalized_inverse,
        separation_quasi: stats.separation == Separation::Quasi,
        laplace: !family.unknown_variance(),
        ..Default::default()
    };
    let n = stats.n;
    let rank = stats.rank;
    let mut prior = None;
    let mut u_posterior = None;
    let mut g_used = None;

    let shrink_of = |g: f64| if g.is_infinite() { 1.0 } else { g / (1.0 + g) };
    let (log_bf, shrink) = if let Some(r2) = stats.r_squared {
        let nf = n as f64;
        match *rule {
            HyperRule::FixedG { g } => {
                let g = g.at(n);
                g_used = Some(g);
                (log_bf_gaussian_fixed_g(r2, n, rank, g), shrink_of(g))
            }
            HyperRule::LocalEb => {
                let g = if rank == 0 || r2 >= 1.0 {
                    0.0
                } else {
                    let f = (r2 / rank as f64) / ((1.0 - r2) / (nf - 1.0 - rank as f64));
                    (f - 1.0).max(0.0)
                };
                g_used = Some(g);
                (log_bf_gaussian_fixed_g(r2, n, rank, g), shrink_of(g))
            }
            HyperRule::Aic => (ic_log_score(stats, false), 1.0),
            HyperRule::Bic => (ic_log_score(stats, true), 1.0),
            HyperRule::TbfFixedG { g } => {
                let g = g.at(n);
                g_used = Some(g);
                (log_tbf(stats.z, rank, g), shrink_of(g))
            }
            _ => {
                let params = mixture_params(rule, n, rank, p_total, &summary.columns)?;
                diagnostics.improper_prior = !params.is_proper();
                prior = Some(params);
                let lbf = log_bf_gaussian_tcch(r2, n, rank, &params)?;
                let shrink = if rank == 0 {
                    0.0
                } else {
                    1.0 - gaussian_u_posterior_mean(r2, n, rank, &params)?
                };
                (lbf, shrink)
            }
        }
    } else if family.overdispersed {
        match *rule {
            HyperRule::FixedG { g } => {
                let g = g.at(n);
                g_used = Some(g);
                let u = 1.0 / (1.0 + g);
                let lbf = if rank == 0 { 0.0 } else { log_marglik_overdispersed(stats, u)? };
                (lbf, shrink_of(g))
            }
            HyperRule::LocalEb => {
                let g = if rank == 0 || stats.q <= 0.0 {
                    0.0
                } else {
                    let p = rank as f64;
                    let denom = (n as f64 - 1.0 - p) * stats.q;
                    let u = if denom > 0.0 { (p * stats.deviance / denom).min(1.0) } else { 1.0 };
                    1.0 / u - 1.0
                };
                g_used = Some(g);
                let lbf = if rank == 0 {
                    0.0
                } else {
                    log_marglik_overdispersed(stats, 1.0 / (1.0 + g))?
                };
                (lbf, shrink_of(g))
            }
            HyperRule::Aic => (ic_log_score(stats, false), 1.0),
            HyperRule::Bic => (ic_log_score(stats, true), 1.0),
            HyperRule::TbfFixedG { g } => {
                let g = g.at(n);
                g_used = Some(g);
                (log_tbf(stats.z, rank, g), shrink_of(g))
            }
            _ => {
                let params = mixture_params(rule, n, rank, p_total, &summary.columns)?;
                diagnostics.improper_prior = !params.is_proper();
                prior = Some(params);
                let lbf = log_bf_overdispersed_tcch(stats, &params)?;
                let shrink = if rank == 0 {
                    0.0
                } else {
                    1.0 - overdispersed_u_posterior_mean(stats, &params)?
                };
                (lbf, shrink)
            }
        }
    } else {
        match *rule {
            HyperRule::FixedG { g } => {
                let g = g.at(n);
                g_used = Some(g);
                (log_bf_fixed_g(stats, g), shrink_of(g))
            }
            HyperRule::LocalEb => {
                let g = local_eb_g(stats);
                g_used = Some(g);
                (log_bf_fixed_g(stats, g), shrink_of(g))
            }
            HyperRule::Aic => (ic_log_score(stats, false), 1.0),
            HyperRule::Bic => (ic_log_score(stats, true), 1.0),
            HyperRule::TbfFixedG { g } => {
                let g = g.at(n);
                g_used = Some(g);
                (log_tbf(stats.z, rank, g), shrink_of(g))
            }
            _ => {
                let params = mixture_params(rule, n, rank, p_total, &summary.columns)?;
                diagnostics.improper_prior = !params.is_proper();
                prior = Some(params);
                let (lbf, post) = log_bf_tcch(stats, &params)?;
                diagnostics.numeric_warning = phi1_disagrees(&post);
                u_posterior = Some(post);
                let shrink = if rank == 0 {
                    0.0
                } else {
                    let m = crate::priors::posterior_u_moments(&post, 1)?;
                    1.0 - m
                };
                (lbf, shrink)
            }
        }
    };
    if log_bf.is_nan() {
        return Err(Error::Numeric(format!(
            "log Bayes factor is NaN for model {} under {}",
            model_label(&summary.columns),
            rule.label()
        )));
    }
    Ok(Evidence {
        columns: summary.columns.clone(),
        rank,
        log_bf_vs_null: log_bf,
        method: *rule,
        prior,
        u_posterior,
        shrink_mean: if rank == 0 { 0.0 } else { shrink },
        g: g_used,
        diagnostics,
    })
}

fn mixture_params(
    rule: &HyperRule,
    n: usize,
    rank: usize,
    p_total: usize,
    columns: &[usize],
) -> Result<TcchParams> {
    let params = resolve_prior(rule, n, rank, p_total)?;
    if !params.is_proper() && columns.is_empty() {
        return Err(Error::Config(format!(
            "{} is improper; the null model must be excluded from the model space",
            rule.label()
        )));
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats() -> ModelStats {
        ModelStats::from_parts(200, 3, 14.0, 15.5, 0.02)
    }

    #[test]
    fn null_model_has_zero_evidence() {
        let s = ModelStats::from_parts(100, 0, 0.0, 0.0, 0.0);
        assert_eq!(log_bf_fixed_g(&s, 100.0), 0.0);
        assert_eq!(log_tbf(0.0, 0, 10.0), 0.0);
        let p = resolve_prior(&HyperRule::Robust, 100, 0, 5).unwrap();
        assert_eq!(log_bf_tcch(&s, &p).unwrap().0, 0.0);
    }

    #[test]
    fn fixed_g_at_zero() {
        let s = stats();
        let v = log_bf_fixed_g(&s, 0.0);
        assert!((v - (0.5 * s.z - 0.5 * s.q + 0.5 * s.log_j_alpha_ratio)).abs() < 1e-14);
    }

    #[test]
    fn local_eb_examples() {
        let s = ModelStats::from_parts(100, 5, 10.0, 9.0, 0.0);
        assert_eq!(local_eb_g(&s), 1.0);
        let s = ModelStats::from_parts(100, 5, 4.0, 9.0, 0.0);
        assert_eq!(local_eb_g(&s), 0.0);
    }

    #[test]
    fn robust_closed_form_agrees_with_tcch() {
        let s = stats();
        let p = resolve_prior(&HyperRule::Robust, s.n, s.rank, 10).unwrap();
        let a = log_bf_tcch(&s, &p).unwrap().0;
        let b = log_bf_robust_closed_form(&s).unwrap();
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn gaussian_branches_agree_with_quadrature() {
        for rule in [HyperRule::HyperG { a_h: 3.0 }, HyperRule::Robust, HyperRule::Intrinsic, HyperRule::HyperGOverN { a_h: 3.0 }] {
            for &r2 in &[0.1, 0.5, 0.9] {
                let p = resolve_prior(&rule, 60, 3, 8).unwrap();
                let a = log_bf_gaussian_tcch(r2, 60, 3, &p).unwrap();
                let b = log_bf_gaussian_tcch_quadrature(r2, 60, 3, &p).unwrap();
                assert!((a - b).abs() < 1e-8, "{rule} r2={r2}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn tbf_and_ic_formulas() {
        assert!((log_tbf(0.0, 2, 3.0) + 4f64.ln()).abs() < 1e-15);
        let s = stats();
        assert!((ic_log_score(&s, false) - (0.5 * s.z - 3.0)).abs() < 1e-15);
    }
}
