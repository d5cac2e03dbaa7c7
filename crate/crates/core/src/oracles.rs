//! Independent reference computations for validating the main code paths.
//!
//! Nothing here reuses the IRLS fitter, the Gauss–Kronrod integrator, the
//! special functions or the search machinery; only the family log-likelihood
//! and its derivatives are shared. Fits use a damped Newton method with a
//! backtracking line search, and integrals use adaptive Simpson quadrature.

use std::cell::Cell;
use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::Family;
use crate::glm::Dataset;
use crate::priors::{resolve_prior, HyperRule, TcchParams};
use crate::search::{ModelId, ModelPrior};

const STUDENT_DF: f64 = 4.0;
pub const MIN_EFFECTIVE_SAMPLES: f64 = 50.0;
pub const DEFAULT_IS_SAMPLES: usize = 10_000;

// ---------------------------------------------------------------------------
// Reference optimizer

/// Reference maximum-likelihood fit with information summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleFit {
    pub columns: Vec<usize>,
    pub alpha: f64,
    pub beta: DVector<f64>,
    pub loglik: f64,
    pub deviance: f64,
    pub d: DVector<f64>,
    pub j_alpha: f64,
    pub xbar: DVector<f64>,
    pub j_beta: DMatrix<f64>,
    pub q: f64,
    pub iterations: usize,
}

impl OracleFit {
    /// Intercept at the information-weighted means.
    pub fn alpha_centered(&self) -> f64 {
        self.alpha + self.xbar.dot(&self.beta)
    }
}

fn oracle_design(data: &Dataset, columns: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(data.n(), columns.len() + 1, |i, j| if j == 0 { 1.0 } else { data.x[(i, columns[j - 1])] })
}

fn oracle_loglik(data: &Dataset, family: &Family, eta: &DVector<f64>) -> f64 {
    let mut total = 0.0;
    for i in 0..data.n() {
        total += family.loglik(data.y[i], data.weights[i], eta[i]);
    }
    total
}

fn oracle_eta(data: &Dataset, z: &DMatrix<f64>, theta: &DVector<f64>) -> DVector<f64> {
    let mut eta = z * theta;
    if let Some(off) = &data.offset {
        eta += off;
    }
    eta
}

/// Damped Newton maximization of the log-likelihood over `(α, β)`.
pub fn oracle_fit(data: &Dataset, family: &Family, columns: &[usize]) -> Result<OracleFit> {
    let z = oracle_design(data, columns);
    let k = z.ncols();
    let n = data.n();
    let mut theta = DVector::zeros(k);
    let ybar = data.y.sum() / data.weights.sum().max(1e-300);
    theta[0] = match family.kind {
        crate::family::FamilyKind::BinomialLogit | crate::family::FamilyKind::BinomialProbit => {
            let p = ybar.clamp(1e-6, 1.0 - 1e-6);
            if family.kind == crate::family::FamilyKind::BinomialLogit {
                (p / (1.0 - p)).ln()
            } else {
                use statrs::distribution::{ContinuousCDF, Normal};
                Normal::standard().inverse_cdf(p)
            }
        }
        crate::family::FamilyKind::PoissonLog => (data.y.mean()).max(1e-6).ln(),
        crate::family::FamilyKind::GaussianIdentity => data.y.mean(),
    };
    let mut eta = oracle_eta(data, &z, &theta);
    let mut ll = oracle_loglik(data, family, &eta);
    let mut iterations = 0;
    loop {
        iterations += 1;
        if iterations > 500 {
            return Err(Error::Numeric("reference optimizer did not converge".into()));
        }
        let mut grad = DVector::zeros(k);
        let mut hess = DMatrix::zeros(k, k);
        for i in 0..n {
            let s = family.score(data.y[i], data.weights[i], eta[i]);
            let mut h = family.observed_info(data.y[i], data.weights[i], eta[i]);
            if !(h > 0.0) {
                h = family.fisher_weight(data.weights[i], eta[i]);
            }
            for a in 0..k {
                grad[a] += s * z[(i, a)];
                for b in 0..k {
                    hess[(a, b)] += h * z[(i, a)] * z[(i, b)];
                }
            }
        }
        let Some(chol) = hess.clone().cholesky() else {
            return Err(Error::Numeric("reference Hessian is singular".into()));
        };
        let step = chol.solve(&grad);
        let decrement = grad.dot(&step);
        if decrement < 1e-24 * (1.0 + ll.abs()) {
            break;
        }
        let mut scale = 1.0;
        let mut improved = false;
        for _ in 0..60 {
            let trial = &theta + &step * scale;
            let trial_eta = oracle_eta(data, &z, &trial);
            let trial_ll = oracle_loglik(data, family, &trial_eta);
            if trial_ll.is_finite() && trial_ll >= ll + 1e-4 * scale * decrement.min(0.0) {
                if trial_ll >= ll {
                    theta = trial;
                    eta = trial_eta;
                    ll = trial_ll;
                    improved = true;
                }
                break;
            }
            scale *= 0.5;
        }
        let moved = (&step * scale).amax();
        if !improved || moved <= 1e-13 * (1.0 + theta.amax()) {
            break;
        }
    }
    let d = DVector::from_fn(n, |i, _| family.observed_info(data.y[i], data.weights[i], eta[i]));
    let j_alpha: f64 = d.iter().sum();
    let p = columns.len();
    let xbar = DVector::from_fn(p, |j, _| {
        (0..n).map(|i| d[i] * data.x[(i, columns[j])]).sum::<f64>() / j_alpha
    });
    let mut j_beta = DMatrix::zeros(p, p);
    for i in 0..n {
        for a in 0..p {
            let xa = data.x[(i, columns[a])] - xbar[a];
            for b in 0..p {
                j_beta[(a, b)] += d[i] * xa * (data.x[(i, columns[b])] - xbar[b]);
            }
        }
    }
    let beta = theta.rows(1, p).clone_owned();
    let q = (beta.transpose() * &j_beta * &beta)[(0, 0)];
    let deviance = (0..n)
        .map(|i| family.unit_deviance(data.y[i], data.weights[i], family.linkinv(eta[i])))
        .sum();
    Ok(OracleFit {
        columns: columns.to_vec(),
        alpha: theta[0],
        beta,
        loglik: ll,
        deviance,
        d,
        j_alpha,
        xbar,
        j_beta,
        q,
        iterations,
    })
}

// ---------------------------------------------------------------------------
// Reference integrator

fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
    h / 6.0 * (fa + 4.0 * fm + fb)
}

const EVALUATION_BUDGET: usize = 4_000_000;
const SMALLEST_ARGUMENT: f64 = 1e-280;

struct Simpson<'a, F> {
    f: &'a F,
    evaluations: Cell<usize>,
    /// Relative noise of integrand values, from rounding in the log domain.
    noise: f64,
}

impl<F: Fn(f64) -> f64> Simpson<'_, F> {
    fn eval(&self, w: f64) -> f64 {
        self.evaluations.set(self.evaluations.get() + 1);
        (self.f)(w)
    }

    #[allow(clippy::too_many_arguments)]
    fn adapt(&self, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let flm = self.eval(0.5 * (a + m));
        let frm = self.eval(0.5 * (m + b));
        let left = simpson(fa, flm, fm, m - a);
        let right = simpson(fm, frm, fb, b - m);
        let delta = left + right - whole;
        let floor = self.noise * (left.abs() + right.abs());
        let exhausted = self.evaluations.get() > EVALUATION_BUDGET;
        if depth == 0 || exhausted || m <= a || m >= b || !delta.is_finite() || delta.abs() <= 15.0 * tol.max(floor) {
            return left + right + delta / 15.0;
        }
        self.adapt(a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + self.adapt(m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

/// `log ∫₀¹ exp(g(w)) dw` by mesh-seeded adaptive Simpson in shifted space.
/// Below `w0` the integrand is taken to follow `w^{tail_power}`.
fn log_simpson_unit<G: Fn(f64) -> f64>(g: &G, w0: f64, tail_power: f64) -> Result<f64> {
    let safe = |w: f64| {
        let v = g(w.clamp(w0, 1.0));
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };
    const SCAN: usize = 400;
    let span = 1.0 - w0;
    let at = |i: usize| w0 + span * i as f64 / SCAN as f64;
    let mut best = f64::NEG_INFINITY;
    let mut best_i = SCAN / 2;
    for i in 0..=SCAN {
        let v = safe(at(i));
        if v > best {
            best = v;
            best_i = i;
        }
    }
    if best == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    if best == f64::INFINITY {
        return Err(Error::Numeric("reference integrand is unbounded".into()));
    }
    // Refine the peak by ternary search on the neighbouring cells.
    let (mut lo, mut hi) = (at(best_i.saturating_sub(1)), at((best_i + 1).min(SCAN)));
    for _ in 0..200 {
        let a = lo + (hi - lo) / 3.0;
        let b = hi - (hi - lo) / 3.0;
        if safe(a) < safe(b) {
            lo = a;
        } else {
            hi = b;
        }
    }
    let mode = 0.5 * (lo + hi);
    let peak = safe(mode).max(best);
    let mut nodes: Vec<f64> = (0..=64).map(|i| w0 + span * i as f64 / 64.0).collect();
    let mut h = 0.5;
    for _ in 0..42 {
        for c in [mode - h, mode + h] {
            if c > w0 && c < 1.0 {
                nodes.push(c);
            }
        }
        h *= 0.5;
    }
    nodes.push(mode);
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();
    let f = |w: f64| (safe(w) - peak).exp();
    let rule = Simpson {
        f: &f,
        evaluations: Cell::new(0),
        noise: 64.0 * f64::EPSILON * (1.0 + peak.abs()),
    };
    let coarse: f64 = nodes
        .windows(2)
        .map(|p| simpson(f(p[0]), f(0.5 * (p[0] + p[1])), f(p[1]), p[1] - p[0]))
        .sum();
    let tol = 1e-14 * coarse.max(1e-300) / nodes.len() as f64;
    let mut total = 0.0;
    for p in nodes.windows(2) {
        let (a, b) = (p[0], p[1]);
        let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
        let whole = simpson(fa, fm, fb, b - a);
        total += rule.adapt(a, b, fa, fm, fb, whole, tol, 40);
    }
    if w0 > 0.0 && tail_power > -1.0 {
        total += f(w0) * w0 / (tail_power + 1.0);
    }
    if rule.evaluations.get() > EVALUATION_BUDGET {
        return Err(Error::Numeric("reference quadrature exhausted its budget".into()));
    }
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Numeric("reference quadrature produced a non-positive integral".into()));
    }
    Ok(peak + total.ln())
}

/// `log ∫_lo^hi exp(log_f(u, hi−u)) du` where the integrand behaves like
/// `(u−lo)^{τ_lo−1}` and `(hi−u)^{τ_hi−1}` at the ends. The distance to the
/// upper end is passed separately so callers avoid cancellation.
///
/// Each half is mapped by `u − lo = c·w^k` with `k = max(2, ⌈1/τ⌉)` when
/// `τ < 1`, which makes the transformed integrand bounded.
pub fn log_integrate<F: Fn(f64, f64) -> f64>(log_f: F, lo: f64, hi: f64, tau_lo: f64, tau_hi: f64) -> Result<f64> {
    if !(hi > lo) {
        return Err(Error::Validation(format!("empty interval [{lo}, {hi}]")));
    }
    let power = |tau: f64| if tau >= 1.0 { 1.0 } else { (1.0 / tau).ceil().max(2.0) };
    let mid = 0.5 * (lo + hi);
    let kl = power(tau_lo);
    let kr = power(tau_hi);
    let cl = mid - lo;
    let cr = hi - mid;
    let left = |w: f64| {
        let du = cl * w.powf(kl);
        log_f(lo + du, (hi - lo) - du) + (cl * kl).ln() + (kl - 1.0) * w.ln()
    };
    let right = |w: f64| {
        let du = cr * w.powf(kr);
        log_f(hi - du, du) + (cr * kr).ln() + (kr - 1.0) * w.ln()
    };
    let cutoff = |c: f64, k: f64, edge: f64| {
        let smallest = SMALLEST_ARGUMENT.max(edge.abs() * 4.0 * f64::EPSILON);
        (smallest / c).powf(1.0 / k)
    };
    let a = log_simpson_unit(&left, cutoff(cl, kl, lo), kl * tau_lo - 1.0)?;
    let b = log_simpson_unit(&right, cutoff(cr, kr, hi), kr * tau_hi - 1.0)?;
    let m = a.max(b);
    Ok(m + ((a - m).exp() + (b - m).exp()).ln())
}

// ---------------------------------------------------------------------------
// Reference mixtures over u

/// Log of the tCCH kernel, written out independently of the priors module.
/// `gap` is `1/v − u`.
pub fn reference_log_kernel(p: &TcchParams, u: f64, gap: f64) -> f64 {
    if !(u > 0.0 && gap >= 0.0) {
        return f64::NEG_INFINITY;
    }
    let a = p.a();
    let b = p.b();
    (0.5 * a - 1.0) * u.ln() + (0.5 * b - 1.0) * (p.v * gap).ln() - 0.5 * p.s_full() * u
        - p.r * (p.kappa + (1.0 - p.kappa) * p.v * u).ln()
}

/// `log ∫ kernel(u)·exp(h(u)) du` with `h` adding `extra_power` to the
/// power of `u` at zero.
pub fn reference_kernel_integral<H: Fn(f64) -> f64>(p: &TcchParams, extra_power: f64, h: H) -> Result<f64> {
    let tau_lo = 0.5 * p.a() + extra_power;
    let tau_hi = 0.5 * p.b();
    log_integrate(|u, gap| reference_log_kernel(p, u, gap) + h(u), 0.0, 1.0 / p.v, tau_lo, tau_hi)
}

/// Sufficient statistics consumed by the reference Bayes factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleStats {
    pub n: usize,
    pub p: usize,
    pub q: f64,
    pub z: f64,
    pub log_j_alpha_ratio: f64,
}

fn fixed_u_log_bf(s: &OracleStats, u: f64) -> f64 {
    0.5 * s.z + 0.5 * s.log_j_alpha_ratio + 0.5 * s.p as f64 * u.ln() - 0.5 * s.q * u
}

/// `log ∫ BF_fixed(u)·p(u) du` for a caller-supplied normalized log prior
/// density on `(0, upper]` with power-law exponent `tau` at zero.
pub fn quad_bf_over_u<P: Fn(f64) -> f64>(
    stats: &OracleStats,
    log_prior_pdf: P,
    upper: f64,
    tau_lo: f64,
    tau_hi: f64,
) -> Result<f64> {
    log_integrate(
        |u, _| fixed_u_log_bf(stats, u) + log_prior_pdf(u),
        0.0,
        upper,
        tau_lo + 0.5 * stats.p as f64,
        tau_hi,
    )
}

/// Reference tCCH Bayes factor with the prior normalized by quadrature.
/// For improper laws the normalizer is omitted.
pub fn reference_log_bf_tcch(stats: &OracleStats, prior: &TcchParams) -> Result<f64> {
    let norm = if prior.a() > 0.0 {
        reference_kernel_integral(prior, 0.0, |_| 0.0)?
    } else {
        0.0
    };
    let num = reference_kernel_integral(prior, 0.5 * stats.p as f64, |u| fixed_u_log_bf(stats, u))?;
    Ok(num - norm)
}

/// Reference posterior mean of `u` under the Laplace kernel.
pub fn reference_u_posterior_mean(stats: &OracleStats, prior: &TcchParams) -> Result<f64> {
    let hp = 0.5 * stats.p as f64;
    let k = |u: f64| hp * u.ln() - 0.5 * stats.q * u;
    let num = reference_kernel_integral(prior, hp + 1.0, |u| k(u) + u.ln())?;
    let den = reference_kernel_integral(prior, hp, k)?;
    Ok((num - den).exp())
}

/// Reference Gaussian unknown-variance Bayes factor from the `u` form of the
/// conditional marginal likelihood.
pub fn reference_log_bf_gaussian(r2: f64, n: usize, p: usize, prior: &TcchParams) -> Result<f64> {
    let e = 0.5 * (n as f64 - 1.0);
    let hp = 0.5 * p as f64;
    let norm = if prior.a() > 0.0 {
        reference_kernel_integral(prior, 0.0, |_| 0.0)?
    } else {
        0.0
    };
    let num = reference_kernel_integral(prior, hp, |u| hp * u.ln() - e * ((1.0 - r2) + r2 * u).ln())?;
    Ok(num - norm)
}

// ---------------------------------------------------------------------------
// Brute-force posterior

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForcePosterior {
    pub p: usize,
    /// `(model, log evidence, probability)` in ascending model order.
    pub entries: Vec<(ModelId, f64, f64)>,
}

impl BruteForcePosterior {
    pub fn inclusion_probabilities(&self) -> Vec<f64> {
        let mut pip = vec![0.0; self.p];
        for (m, _, prob) in &self.entries {
            for (j, v) in pip.iter_mut().enumerate() {
                if m.contains(j) {
                    *v += prob;
                }
            }
        }
        pip
    }

    pub fn probability_of(&self, m: ModelId) -> f64 {
        self.entries.iter().find(|e| e.0 == m).map_or(0.0, |e| e.2)
    }
}

fn reference_log_model_prior(k: usize, p: usize, prior: &ModelPrior) -> f64 {
    use statrs::function::gamma::ln_gamma;
    match *prior {
        ModelPrior::Uniform => -(p as f64) * 2f64.ln(),
        ModelPrior::BetaBinomial { a, b } => {
            let lb = |x: f64, y: f64| ln_gamma(x) + ln_gamma(y) - ln_gamma(x + y);
            lb(k as f64 + a, (p - k) as f64 + b) - lb(a, b)
        }
    }
}

/// Reference log evidence of one model; `None` when the rule cannot be
/// evaluated by the reference (for example Gaussian data under TBF).
pub fn reference_log_evidence(
    data: &Dataset,
    family: &Family,
    rule: &HyperRule,
    columns: &[usize],
    null: &OracleFit,
) -> Result<f64> {
    let fit = oracle_fit(data, family, columns)?;
    let n = data.n();
    let p = columns.len();
    if p == 0 {
        return Ok(0.0);
    }
    let g_of = |g: &crate::priors::Scale| g.at(n);
    if family.unknown_variance() {
        let r2 = 1.0 - fit.deviance / null.deviance;
        let nf = n as f64;
        let pf = p as f64;
        let fixed = |g: f64| 0.5 * (nf - pf - 1.0) * (1.0 + g).ln() - 0.5 * (nf - 1.0) * (1.0 + g * (1.0 - r2)).ln();
        let z = -nf * (1.0 - r2).ln();
        return Ok(match rule {
            HyperRule::FixedG { g } => fixed(g_of(g)),
            HyperRule::LocalEb => {
                let f = (r2 / pf) / ((1.0 - r2) / (nf - 1.0 - pf));
                fixed((f - 1.0).max(0.0))
            }
            HyperRule::Aic => 0.5 * z - pf,
            HyperRule::Bic => 0.5 * z - 0.5 * pf * nf.ln(),
            HyperRule::TbfFixedG { g } => {
                let g = g_of(g);
                -0.5 * pf * (1.0 + g).ln() + g * z / (2.0 * (1.0 + g))
            }
            _ => reference_log_bf_gaussian(r2, n, p, &resolve_prior(rule, n, p, data.p())?)?,
        });
    }
    let stats = OracleStats {
        n,
        p,
        q: fit.q,
        z: 2.0 * (fit.loglik - null.loglik),
        log_j_alpha_ratio: null.j_alpha.ln() - fit.j_alpha.ln(),
    };
    let fixed = |g: f64| fixed_u_log_bf(&stats, 1.0 / (1.0 + g));
    Ok(match rule {
        HyperRule::FixedG { g } => fixed(g_of(g)),
        HyperRule::LocalEb => fixed((stats.q / p as f64 - 1.0).max(0.0)),
        HyperRule::Aic => 0.5 * stats.z - p as f64,
        HyperRule::Bic => 0.5 * stats.z - 0.5 * p as f64 * (n as f64).ln(),
        HyperRule::TbfFixedG { g } => {
            let g = g_of(g);
            -0.5 * p as f64 * (1.0 + g).ln() + g * stats.z / (2.0 * (1.0 + g))
        }
        _ => reference_log_bf_tcch(&stats, &resolve_prior(rule, n, p, data.p())?)?,
    })
}

/// Posterior over all `2^p` models computed from scratch by the reference
/// fitter and integrator. Intended for small `p` only.
pub fn brute_force_posterior(
    data: &Dataset,
    family: &Family,
    rule: &HyperRule,
    prior: &ModelPrior,
) -> Result<BruteForcePosterior> {
    let p = data.p();
    if p > 12 {
        return Err(Error::TooManyModels { p, limit: 12 });
    }
    if family.overdispersed {
        return Err(Error::Config("the reference posterior does not cover over-dispersion".into()));
    }
    let null = oracle_fit(data, family, &[])?;
    let mut raw = Vec::new();
    for bits in 0..(1u128 << p) {
        let cols: Vec<usize> = (0..p).filter(|j| (bits >> j) & 1 == 1).collect();
        let lev = match reference_log_evidence(data, family, rule, &cols, &null) {
            Ok(v) => v,
            Err(Error::Numeric(_)) => continue,
            Err(e) => return Err(e),
        };
        raw.push((ModelId(bits), lev, lev + reference_log_model_prior(cols.len(), p, prior)));
    }
    let m = raw.iter().map(|r| r.2).fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = raw.iter().map(|r| (r.2 - m).exp()).sum();
    let entries = raw
        .into_iter()
        .map(|(id, lev, lw)| (id, lev, (lw - m).exp() / total))
        .collect();
    Ok(BruteForcePosterior { p, entries })
}

// ---------------------------------------------------------------------------
// Importance sampling

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ISEstimate {
    pub log_value: f64,
    pub mc_standard_error: f64,
    pub samples: usize,
    pub seed: u64,
    pub effective_sample_size: f64,
}

fn student_t_log_density(x: f64, loc: f64, scale: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    let nu = STUDENT_DF;
    let z = (x - loc) / scale;
    ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (nu * std::f64::consts::PI).ln() - scale.ln()
        - 0.5 * (nu + 1.0) * (1.0 + z * z / nu).ln()
}

fn summarize_weights(log_w: &[f64], seed: u64) -> Result<ISEstimate> {
    let m = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Err(Error::Numeric("importance weights are not finite".into()));
    }
    let w: Vec<f64> = log_w.iter().map(|l| (l - m).exp()).collect();
    let count = w.len() as f64;
    let sum: f64 = w.iter().sum();
    let sum_sq: f64 = w.iter().map(|x| x * x).sum();
    let mean = sum / count;
    let var = (sum_sq / count - mean * mean).max(0.0) * count / (count - 1.0);
    let ess = sum * sum / sum_sq;
    if ess < MIN_EFFECTIVE_SAMPLES {
        return Err(Error::LowEffectiveSampleSize {
            ess,
            min: MIN_EFFECTIVE_SAMPLES,
        });
    }
    Ok(ISEstimate {
        log_value: m + mean.ln(),
        mc_standard_error: (var / count).sqrt() / mean,
        samples: w.len(),
        seed,
        effective_sample_size: ess,
    })
}

/// Importance-sampling estimate of `log ∫∫ L(α, β)·N(β; 0, g J_β⁻¹) dα dβ`
/// with a flat prior on the centered intercept. Proposals are Student-t
/// with four degrees of freedom centered at the conditional posteriors.
pub fn importance_sampling_marginal(
    data: &Dataset,
    family: &Family,
    columns: &[usize],
    g: f64,
    samples: usize,
    seed: u64,
) -> Result<ISEstimate> {
    if samples < 1000 {
        return Err(Error::Validation(format!("need at least 1000 samples, got {samples}")));
    }
    let fit = oracle_fit(data, family, columns)?;
    let n = data.n();
    let p = columns.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chi = ChiSquared::new(STUDENT_DF).expect("valid degrees of freedom");
    let alpha_loc = fit.alpha_centered();
    let alpha_scale = fit.j_alpha.powf(-0.5);
    let shrink = g / (1.0 + g);

    let prior_cov_inv = &fit.j_beta / g;
    let (prop_chol, prop_log_det, prop_inv, prior_log_det) = if p > 0 {
        let jinv = fit
            .j_beta
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numeric("singular information in IS proposal".into()))?
            .inverse();
        let cov = jinv * shrink;
        let chol = cov.clone().cholesky().ok_or_else(|| Error::Numeric("proposal covariance".into()))?;
        let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let inv = chol.inverse();
        let jb_chol = fit.j_beta.clone().cholesky().expect("checked above");
        let log_det_j = 2.0 * jb_chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        // log det of the prior covariance g·J⁻¹
        let prior_log_det = p as f64 * g.ln() - log_det_j;
        (Some(chol.l()), log_det, inv, prior_log_det)
    } else {
        (None, 0.0, DMatrix::zeros(0, 0), 0.0)
    };
    let beta_loc = &fit.beta * shrink;
    let pf = p as f64;
    let nu = STUDENT_DF;
    use statrs::function::gamma::ln_gamma;
    let mvt_const = ln_gamma(0.5 * (nu + pf)) - ln_gamma(0.5 * nu) - 0.5 * pf * (nu * std::f64::consts::PI).ln()
        - 0.5 * prop_log_det;
    let two_pi = 2.0 * std::f64::consts::PI;

    let mut log_w = Vec::with_capacity(samples);
    let mut eta = DVector::zeros(n);
    for _ in 0..samples {
        let za: f64 = StandardNormal.sample(&mut rng);
        let wa: f64 = chi.sample(&mut rng);
        let alpha = alpha_loc + alpha_scale * za / (wa / nu).sqrt();
        let mut lw = -student_t_log_density(alpha, alpha_loc, alpha_scale);
        let mut beta = DVector::zeros(p);
        if let Some(l) = &prop_chol {
            let zb = DVector::from_fn(p, |_, _| {
                let v: f64 = StandardNormal.sample(&mut rng);
                v
            });
            let wb: f64 = chi.sample(&mut rng);
            beta = &beta_loc + l * zb / (wb / nu).sqrt();
            let dev = &beta - &beta_loc;
            let delta = (dev.transpose() * &prop_inv * &dev)[(0, 0)];
            lw -= mvt_const - 0.5 * (nu + pf) * (1.0 + delta / nu).ln();
            let quad = (beta.transpose() * &prior_cov_inv * &beta)[(0, 0)];
            lw += -0.5 * pf * two_pi.ln() - 0.5 * prior_log_det - 0.5 * quad;
        }
        for i in 0..n {
            let mut e = alpha + data.offset.as_ref().map_or(0.0, |o| o[i]);
            for (k, &c) in columns.iter().enumerate() {
                e += (data.x[(i, c)] - fit.xbar[k]) * beta[k];
            }
            eta[i] = e;
        }
        lw += oracle_loglik(data, family, &eta);
        log_w.push(lw);
    }
    summarize_weights(&log_w, seed)
}

/// Importance-sampling estimate of the fixed-`g` Bayes factor against the
/// null model; standard errors of the two marginals are combined.
pub fn importance_sampling_bf(
    data: &Dataset,
    family: &Family,
    columns: &[usize],
    g: f64,
    samples: usize,
    seed: u64,
) -> Result<ISEstimate> {
    let m = importance_sampling_marginal(data, family, columns, g, samples, seed)?;
    let z = importance_sampling_marginal(data, family, &[], g, samples, seed.wrapping_add(0x9E37_79B9))?;
    Ok(ISEstimate {
        log_value: m.log_value - z.log_value,
        mc_standard_error: m.mc_standard_error.hypot(z.mc_standard_error),
        samples,
        seed,
        effective_sample_size: m.effective_sample_size.min(z.effective_sample_size),
    })
}

// ---------------------------------------------------------------------------
// Self check

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Quick oracle comparisons suitable for a smoke test of an installation.
pub fn self_check() -> Vec<CheckResult> {
    let mut out = Vec::new();
    let stats_main = crate::evidence::ModelStats::from_parts(400, 3, 35.0, 36.0, 0.05);
    let stats_ref = OracleStats {
        n: 400,
        p: 3,
        q: 35.0,
        z: 36.0,
        log_j_alpha_ratio: 0.05,
    };
    let rules = [
        HyperRule::HyperG { a_h: 3.0 },
        HyperRule::Uniform,
        HyperRule::BetaPrime,
        HyperRule::Benchmark { c: 0.01 },
        HyperRule::ZsAdapted,
        HyperRule::Robust,
        HyperRule::HyperGOverN { a_h: 3.0 },
        HyperRule::Intrinsic,
        HyperRule::Ch { a: 0.5, b: crate::priors::Scale::TimesN(1.0), s: crate::priors::Scale::Fixed(0.0) },
    ];
    for rule in rules {
        let res = resolve_prior(&rule, 400, 3, 10).and_then(|prior| {
            let a = crate::evidence::log_bf_tcch(&stats_main, &prior)?.0;
            let b = reference_log_bf_tcch(&stats_ref, &prior)?;
            Ok((a, b))
        });
        out.push(match res {
            Ok((a, b)) => CheckResult {
                name: format!("tcch-vs-quadrature {}", rule.label()),
                passed: (a - b).abs() <= 1e-7,
                detail: format!("analytic={a:.12} reference={b:.12}"),
            },
            Err(e) => CheckResult {
                name: format!("tcch-vs-quadrature {}", rule.label()),
                passed: false,
                detail: e.to_string(),
            },
        });
    }
    let kummer = crate::special::log_kummer_1f1(1.0, 3.0, 2.0).and_then(|a| {
        let b = crate::special::log_kummer_1f1(2.0, 3.0, -2.0)?;
        Ok((a.value(), 2f64.exp() * b.value()))
    });
    out.push(match kummer {
        Ok((a, b)) => CheckResult {
            name: "kummer-transform".into(),
            passed: ((a - b) / a).abs() < 1e-10,
            detail: format!("{a:.15} vs {b:.15}"),
        },
        Err(e) => CheckResult {
            name: "kummer-transform".into(),
            passed: false,
            detail: e.to_string(),
        },
    });
    out
}

/// Posterior probabilities keyed by model, for comparisons in tests.
pub fn probability_map(post: &BruteForcePosterior) -> BTreeMap<ModelId, f64> {
    post.entries.iter().map(|(m, _, p)| (*m, *p)).collect()
}
