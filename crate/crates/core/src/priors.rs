//! The truncated compound confluent hypergeometric (tCCH) family of mixing
//! distributions on `u = 1/(1+g)`, its named members, conjugate updates and
//! the conditional posterior of the coefficients.
//!
//! Parameters are stored in halved form `(t, q, r, s, v, κ) = (a/2, b/2, r,
//! s/2, v, κ)`, the form in which the density is written:
//!
//! `p(u) ∝ u^{t−1}(1−vu)^{q−1} e^{−su} [κ + (1−κ)vu]^{−r}` on `(0, 1/v)`.
//!
//! Its normalizer is `v^{−t} e^{−s/v} B(t, q) Φ₁(q, r, t+q, s/v, 1−κ)`.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::inverse_spd;
use crate::special::quad::{integrate_beta_kernel, QuadOptions};
use crate::special::{ln_beta, log_humbert_phi1};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TcchParams {
    pub t: f64,
    pub q: f64,
    pub r: f64,
    pub s: f64,
    pub v: f64,
    pub kappa: f64,
}

impl TcchParams {
    /// Build from the un-halved `(a, b, r, s, v, κ)` used in prior tables.
    pub fn from_abrsvk(a: f64, b: f64, r: f64, s: f64, v: f64, kappa: f64) -> Result<Self> {
        let p = TcchParams {
            t: a / 2.0,
            q: b / 2.0,
            r,
            s: s / 2.0,
            v,
            kappa,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.t, self.q, self.r, self.s, self.v, self.kappa]
            .iter()
            .all(|x| x.is_finite());
        if !all_finite {
            return Err(Error::Validation(format!("non-finite tCCH parameters {self:?}")));
        }
        if self.t < 0.0 || self.q <= 0.0 {
            return Err(Error::Validation(format!(
                "tCCH needs a >= 0 and b > 0, got a={}, b={}",
                self.a(),
                self.b()
            )));
        }
        if self.v < 1.0 || self.kappa <= 0.0 {
            return Err(Error::Validation(format!(
                "tCCH needs v >= 1 and kappa > 0, got v={}, kappa={}",
                self.v, self.kappa
            )));
        }
        Ok(())
    }

    pub fn a(&self) -> f64 {
        2.0 * self.t
    }

    pub fn b(&self) -> f64 {
        2.0 * self.q
    }

    pub fn s_full(&self) -> f64 {
        2.0 * self.s
    }

    pub fn is_proper(&self) -> bool {
        self.t > 0.0
    }

    /// Upper end of the support, `1/v`.
    pub fn upper(&self) -> f64 {
        1.0 / self.v
    }

    /// Log of the unnormalized density kernel at `u`.
    pub fn log_kernel(&self, u: f64) -> f64 {
        if !(u > 0.0 && u <= self.upper()) {
            return f64::NEG_INFINITY;
        }
        let w = self.v * u;
        let mut out = (self.t - 1.0) * u.ln() - self.s * u;
        if self.q != 1.0 {
            out += (self.q - 1.0) * (-w).ln_1p();
        }
        if self.r != 0.0 {
            out -= self.r * (self.kappa + (1.0 - self.kappa) * w).ln();
        }
        out
    }

    /// `log` of the normalizing constant of the density.
    pub fn log_normalizer(&self) -> Result<f64> {
        if !self.is_proper() {
            return Err(Error::Config(
                "the tCCH law with a = 0 is improper and has no normalizer".into(),
            ));
        }
        let phi = log_humbert_phi1(self.q, self.r, self.t + self.q, self.s / self.v, 1.0 - self.kappa)?;
        Ok(-self.t * self.v.ln() - self.s / self.v + ln_beta(self.t, self.q) + phi.ln())
    }

    /// Same law with `t` shifted by `dt`, as used for moments.
    pub fn with_shifted_t(&self, dt: f64) -> TcchParams {
        TcchParams {
            t: self.t + dt,
            ..*self
        }
    }
}

impl fmt::Display for TcchParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "tCCH(a={}, b={}, r={}, s={}, v={}, kappa={})",
            self.a(),
            self.b(),
            self.r,
            self.s_full(),
            self.v,
            self.kappa
        )
    }
}

/// Log density of the tCCH law; `−∞` outside `(0, 1/v]`.
pub fn tcch_log_pdf(u: f64, params: &TcchParams) -> Result<f64> {
    let k = params.log_kernel(u);
    if k == f64::NEG_INFINITY {
        return Ok(k);
    }
    Ok(k - params.log_normalizer()?)
}

/// A hyperparameter that is either a constant or a multiple of `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Scale {
    Fixed(f64),
    TimesN(f64),
}

impl Scale {
    pub fn at(&self, n: usize) -> f64 {
        match *self {
            Scale::Fixed(v) => v,
            Scale::TimesN(c) => c * n as f64,
        }
    }

    /// Parse `"3.5"`, `"n"`, or `"2n"` / `"2*n"`.
    pub fn parse(text: &str) -> Result<Scale> {
        let s = text.trim();
        if let Some(head) = s.strip_suffix('n') {
            let head = head.trim().trim_end_matches('*').trim();
            let c = if head.is_empty() {
                1.0
            } else {
                head.parse::<f64>()
                    .map_err(|_| Error::Config(format!("cannot parse scale `{text}`")))?
            };
            return Ok(Scale::TimesN(c));
        }
        s.parse::<f64>()
            .map(Scale::Fixed)
            .map_err(|_| Error::Config(format!("cannot parse number `{text}`")))
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scale::Fixed(v) => write!(f, "{v}"),
            Scale::TimesN(c) if *c == 1.0 => write!(f, "n"),
            Scale::TimesN(c) => write!(f, "{c}n"),
        }
    }
}

/// Prior on `g` (or the evidence method standing in for one).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HyperRule {
    Ch { a: f64, b: Scale, s: Scale },
    HyperG { a_h: f64 },
    Uniform,
    Jeffreys,
    BetaPrime,
    Benchmark { c: f64 },
    ZsAdapted,
    Robust,
    HyperGOverN { a_h: f64 },
    Intrinsic,
    FixedG { g: Scale },
    LocalEb,
    Aic,
    Bic,
    TbfFixedG { g: Scale },
}

impl HyperRule {
    /// Whether the rule integrates over a tCCH mixing distribution.
    pub fn is_mixture(&self) -> bool {
        !matches!(
            self,
            HyperRule::FixedG { .. }
                | HyperRule::LocalEb
                | HyperRule::Aic
                | HyperRule::Bic
                | HyperRule::TbfFixedG { .. }
        )
    }

    pub fn label(&self) -> String {
        match self {
            HyperRule::Ch { a, b, s } => format!("CH(a={a},b={b},s={s})"),
            HyperRule::HyperG { a_h } => format!("Hyper-g(a={a_h})"),
            HyperRule::Uniform => "Uniform".into(),
            HyperRule::Jeffreys => "Jeffreys".into(),
            HyperRule::BetaPrime => "Beta-prime".into(),
            HyperRule::Benchmark { c } => format!("Benchmark(c={c})"),
            HyperRule::ZsAdapted => "ZS adapted".into(),
            HyperRule::Robust => "Robust".into(),
            HyperRule::HyperGOverN { a_h } => format!("Hyper-g/n(a={a_h})"),
            HyperRule::Intrinsic => "Intrinsic".into(),
            HyperRule::FixedG { g } => format!("g-prior(g={g})"),
            HyperRule::LocalEb => "Local EB".into(),
            HyperRule::Aic => "AIC".into(),
            HyperRule::Bic => "BIC".into(),
            HyperRule::TbfFixedG { g } => format!("TBF(g={g})"),
        }
    }

    /// Parse a rule from its name and keyword arguments.
    ///
    /// Names are matched case-insensitively after mapping spaces, `-` and
    /// `/` to `_`, so `"Hyper-g/n"`, `"hyper_g_n"` and `"HYPER-G/N"` agree.
    pub fn from_name(name: &str, args: &BTreeMap<String, String>) -> Result<HyperRule> {
        let key: String = name
            .trim()
            .to_ascii_lowercase()
            .chars()
            .map(|c| if c == ' ' || c == '-' || c == '/' { '_' } else { c })
            .collect();
        let allowed: &[&str] = match key.as_str() {
            "ch" => &["a", "b", "s"],
            "hyper_g" | "hyper_g_n" | "hyper_g_over_n" => &["a"],
            "benchmark" => &["c"],
            "fixed_g" | "g_prior" | "tbf" | "tbf_fixed_g" => &["g"],
            _ => &[],
        };
        if let Some(bad) = args.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::Config(format!(
                "prior `{name}` does not accept argument `{bad}`"
            )));
        }
        let num = |k: &str, default: f64| -> Result<f64> {
            match args.get(k) {
                None => Ok(default),
                Some(v) => v
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("argument {k}=`{v}` is not a number"))),
            }
        };
        let scale = |k: &str, default: Scale| -> Result<Scale> {
            args.get(k).map_or(Ok(default), |v| Scale::parse(v))
        };
        let rule = match key.as_str() {
            "ch" => HyperRule::Ch {
                a: num("a", 1.0)?,
                b: scale("b", Scale::Fixed(2.0))?,
                s: scale("s", Scale::Fixed(0.0))?,
            },
            "hyper_g" => HyperRule::HyperG { a_h: num("a", 3.0)? },
            "uniform" => HyperRule::Uniform,
            "jeffreys" => HyperRule::Jeffreys,
            "beta_prime" => HyperRule::BetaPrime,
            "benchmark" => HyperRule::Benchmark { c: num("c", 0.01)? },
            "zs_adapted" | "zs" => HyperRule::ZsAdapted,
            "robust" => HyperRule::Robust,
            "hyper_g_n" | "hyper_g_over_n" => HyperRule::HyperGOverN { a_h: num("a", 3.0)? },
            "intrinsic" => HyperRule::Intrinsic,
            "fixed_g" | "g_prior" => HyperRule::FixedG {
                g: scale("g", Scale::TimesN(1.0))?,
            },
            "local_eb" => HyperRule::LocalEb,
            "aic" => HyperRule::Aic,
            "bic" => HyperRule::Bic,
            "tbf" | "tbf_fixed_g" => HyperRule::TbfFixedG {
                g: scale("g", Scale::TimesN(1.0))?,
            },
            _ => return Err(Error::Config(format!("unknown prior `{name}`"))),
        };
        rule.check()?;
        Ok(rule)
    }

    /// Validate hyperparameters that do not depend on the data.
    pub fn check(&self) -> Result<()> {
        match *self {
            HyperRule::HyperG { a_h } | HyperRule::HyperGOverN { a_h } => {
                if !(a_h > 2.0 && a_h <= 4.0) {
                    return Err(Error::Config(format!("hyper-g needs 2 < a <= 4, got {a_h}")));
                }
            }
            HyperRule::Benchmark { c } if !(c > 0.0 && c.is_finite()) => {
                return Err(Error::Config(format!("benchmark c must be positive, got {c}")));
            }
            HyperRule::Ch { a, .. } if !(a > 0.0 && a.is_finite()) => {
                return Err(Error::Config(format!("CH prior needs a > 0, got {a}")));
            }
            HyperRule::FixedG { g } | HyperRule::TbfFixedG { g } => {
                let probe = g.at(1);
                if !(probe >= 0.0 && probe.is_finite()) {
                    return Err(Error::Config(format!("g must be non-negative, got {g}")));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

impl fmt::Display for HyperRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Resolve a mixture rule to tCCH parameters for a model of rank `p_m`
/// among `p_total` candidate predictors and `n` observations.
pub fn resolve_prior(rule: &HyperRule, n: usize, p_m: usize, p_total: usize) -> Result<TcchParams> {
    let nf = n as f64;
    let pm = p_m as f64;
    let (a, b, r, s, v, k) = match *rule {
        HyperRule::Ch { a, b, s } => (a, b.at(n), 0.0, s.at(n), 1.0, 1.0),
        HyperRule::HyperG { a_h } => (a_h - 2.0, 2.0, 0.0, 0.0, 1.0, 1.0),
        HyperRule::Uniform => (2.0, 2.0, 0.0, 0.0, 1.0, 1.0),
        HyperRule::Jeffreys => (0.0, 2.0, 0.0, 0.0, 1.0, 1.0),
        HyperRule::BetaPrime => {
            let b = nf - pm - 1.5;
            if b <= 0.0 {
                return Err(Error::Config(format!(
                    "Beta-prime prior needs n > p_M + 1.5, got n={n}, p_M={p_m}"
                )));
            }
            (0.5, b, 0.0, 0.0, 1.0, 1.0)
        }
        HyperRule::Benchmark { c } => {
            let scale = nf.max((p_total * p_total) as f64);
            (2.0 * c, 2.0 * c * scale, 0.0, 0.0, 1.0, 1.0)
        }
        HyperRule::ZsAdapted => (1.0, 2.0, 0.0, nf + 3.0, 1.0, 1.0),
        HyperRule::Robust => (1.0, 2.0, 1.5, 0.0, (nf + 1.0) / (pm + 1.0), 1.0),
        HyperRule::HyperGOverN { a_h } => (a_h - 2.0, 2.0, a_h / 2.0, 0.0, 1.0, 1.0 / nf),
        HyperRule::Intrinsic => (
            1.0,
            1.0,
            1.0,
            0.0,
            (nf + pm + 1.0) / (pm + 1.0),
            (nf + pm + 1.0) / nf,
        ),
        HyperRule::FixedG { .. }
        | HyperRule::LocalEb
        | HyperRule::Aic
        | HyperRule::Bic
        | HyperRule::TbfFixedG { .. } => {
            return Err(Error::Config(format!(
                "{} is not a tCCH mixture",
                rule.label()
            )))
        }
    };
    if n == 0 {
        return Err(Error::Validation("n must be positive".into()));
    }
    TcchParams::from_abrsvk(a, b, r, s, v, k)
}

/// Conjugate update of the mixing law given rank `p_m` and Wald statistic `wald_q`.
pub fn posterior_update(params: &TcchParams, p_m: usize, wald_q: f64) -> TcchParams {
    TcchParams {
        t: params.t + p_m as f64 / 2.0,
        s: params.s + wald_q / 2.0,
        ..*params
    }
}

/// `E[u^k]` under a proper tCCH law, as a ratio of normalizers.
pub fn posterior_u_moments(params: &TcchParams, k: u32) -> Result<f64> {
    if !(k == 1 || k == 2) {
        return Err(Error::Validation(format!("moment order must be 1 or 2, got {k}")));
    }
    let z0 = params.log_normalizer()?;
    let zk = params.with_shifted_t(k as f64).log_normalizer()?;
    Ok((zk - z0).exp())
}

/// Mean and variance of `u`.
pub fn u_mean_variance(params: &TcchParams) -> Result<(f64, f64)> {
    let z0 = params.log_normalizer()?;
    let z1 = params.with_shifted_t(1.0).log_normalizer()?;
    let z2 = params.with_shifted_t(2.0).log_normalizer()?;
    let m1 = (z1 - z0).exp();
    // Var = E[u]² (E[u²]/E[u]² − 1), formed in log space to limit cancellation.
    let ratio = z2 - z0 - 2.0 * (z1 - z0);
    Ok((m1, m1 * m1 * ratio.exp_m1()))
}

/// `log E[exp(h(u))]` under a proper tCCH law, by quadrature.
///
/// `log_h` receives `u` on the prior support.
pub fn log_expectation<H: Fn(f64) -> f64>(params: &TcchParams, log_h: H) -> Result<f64> {
    let z = params.log_normalizer()?;
    Ok(log_integral_against_kernel(params, log_h)? - z)
}

/// `log ∫ kernel(u)·exp(h(u)) du` over the prior support, unnormalized.
pub fn log_integral_against_kernel<H: Fn(f64) -> f64>(params: &TcchParams, log_h: H) -> Result<f64> {
    let TcchParams { t, q, r, s, v, kappa } = *params;
    if t <= 0.0 {
        return Err(Error::Config("kernel integral needs a > 0".into()));
    }
    let opts = QuadOptions::default();
    let res = integrate_beta_kernel(
        t,
        q,
        |w, _| {
            let mut out = -s * w / v + log_h(w / v);
            if r != 0.0 {
                out -= r * (kappa + (1.0 - kappa) * w).ln();
            }
            out
        },
        &opts,
    )?;
    Ok(res.log_value - t * v.ln())
}

/// Approximate Gaussian posterior of the coefficients given `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefPosterior {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub shrink_mean: f64,
    pub used_generalized_inverse: bool,
}

/// `β | Y, g ≈ N(g/(1+g)·β̂, g/(1+g)·J_β⁻¹)`.
pub fn conditional_beta_posterior(
    beta_hat: &DVector<f64>,
    j_beta: &DMatrix<f64>,
    g: f64,
) -> Result<CoefPosterior> {
    if !(g >= 0.0) {
        return Err(Error::Validation(format!("g must be non-negative, got {g}")));
    }
    let k = beta_hat.len();
    if j_beta.nrows() != k || j_beta.ncols() != k {
        return Err(Error::Validation("information matrix does not match coefficients".into()));
    }
    let shrink = if g.is_infinite() { 1.0 } else { g / (1.0 + g) };
    let (inv, generalized) = match inverse_spd(j_beta) {
        Some(inv) => (inv, false),
        None => (
            j_beta
                .clone()
                .pseudo_inverse(1e-12)
                .map_err(|e| Error::Numeric(e.to_string()))?,
            true,
        ),
    };
    Ok(CoefPosterior {
        mean: beta_hat * shrink,
        covariance: inv * shrink,
        shrink_mean: shrink,
        used_generalized_inverse: generalized,
    })
}

/// Log marginal prior density of `β` along `βᵀJβ = quad_form`, integrating
/// `N(0, gJ⁻¹)` over the tCCH law on `u = 1/(1+g)`.
pub fn log_marginal_beta_density(
    params: &TcchParams,
    p: usize,
    quad_form: f64,
    log_det_j: f64,
) -> Result<f64> {
    let pf = p as f64;
    let base = -0.5 * pf * (2.0 * std::f64::consts::PI).ln() + 0.5 * log_det_j;
    let inner = log_expectation(params, |u| {
        let g = (1.0 - u) / u;
        if g <= 0.0 {
            return f64::NEG_INFINITY;
        }
        -0.5 * pf * g.ln() - quad_form / (2.0 * g)
    })?;
    Ok(base + inner)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_density_is_flat() {
        let p = resolve_prior(&HyperRule::Uniform, 50, 2, 5).unwrap();
        for &u in &[0.01, 0.3, 0.99] {
            assert!(tcch_log_pdf(u, &p).unwrap().abs() < 1e-12);
        }
        assert_eq!(tcch_log_pdf(1.5, &p).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn hyper_g_density() {
        let p = resolve_prior(&HyperRule::HyperG { a_h: 3.0 }, 50, 2, 5).unwrap();
        for &u in &[0.01f64, 0.3, 0.99] {
            let expected = (0.5 * u.powf(-0.5)).ln();
            assert!((tcch_log_pdf(u, &p).unwrap() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn table_rows() {
        let r = resolve_prior(&HyperRule::Robust, 99, 4, 10).unwrap();
        assert_eq!((r.a(), r.b(), r.r, r.s_full(), r.v, r.kappa), (1.0, 2.0, 1.5, 0.0, 20.0, 1.0));
        let z = resolve_prior(&HyperRule::ZsAdapted, 40, 1, 3).unwrap();
        assert_eq!((z.a(), z.b(), z.s_full()), (1.0, 2.0, 43.0));
        let b = resolve_prior(&HyperRule::Benchmark { c: 0.01 }, 100, 3, 20).unwrap();
        assert!((b.a() - 0.02).abs() < 1e-15 && (b.b() - 8.0).abs() < 1e-12);
        assert!(resolve_prior(&HyperRule::BetaPrime, 5, 4, 4).is_err());
    }

    #[test]
    fn moments_of_beta_special_case() {
        // CH with s = 0 is Beta(a/2, b/2) on u.
        let p = TcchParams::from_abrsvk(3.0, 5.0, 0.0, 0.0, 1.0, 1.0).unwrap();
        let m = posterior_u_moments(&p, 1).unwrap();
        assert!((m - 3.0 / 8.0).abs() < 1e-13);
    }

    #[test]
    fn scale_parsing() {
        assert_eq!(Scale::parse("n").unwrap(), Scale::TimesN(1.0));
        assert_eq!(Scale::parse("2.5n").unwrap(), Scale::TimesN(2.5));
        assert_eq!(Scale::parse("3*n").unwrap(), Scale::TimesN(3.0));
        assert_eq!(Scale::parse("7").unwrap(), Scale::Fixed(7.0));
        assert!(Scale::parse("x").is_err());
    }

    #[test]
    fn rule_names_follow_table_spellings() {
        let none = BTreeMap::new();
        assert_eq!(HyperRule::from_name("Hyper-g/n", &none).unwrap(), HyperRule::HyperGOverN { a_h: 3.0 });
        assert_eq!(HyperRule::from_name("ZS adapted", &none).unwrap(), HyperRule::ZsAdapted);
        assert_eq!(HyperRule::from_name("Beta-prime", &none).unwrap(), HyperRule::BetaPrime);
        let mut args = BTreeMap::new();
        args.insert("b".to_string(), "n".to_string());
        args.insert("a".to_string(), "0.5".to_string());
        assert_eq!(
            HyperRule::from_name("CH", &args).unwrap(),
            HyperRule::Ch { a: 0.5, b: Scale::TimesN(1.0), s: Scale::Fixed(0.0) }
        );
        assert!(HyperRule::from_name("robust", &args).is_err());
        assert!(HyperRule::from_name("nonsense", &none).is_err());
    }

    #[test]
    fn zero_g_posterior_is_point_mass() {
        let b = DVector::from_vec(vec![1.0, -2.0]);
        let j = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let post = conditional_beta_posterior(&b, &j, 0.0).unwrap();
        assert!(post.mean.amax() == 0.0 && post.covariance.amax() == 0.0);
    }
}
