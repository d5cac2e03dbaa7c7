//! Model-space priors, exhaustive enumeration, Metropolis–Hastings search
//! and Bayesian model averaging.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evidence::{compute_evidence, summarize_model, Evidence, ModelSummary};
use crate::family::Family;
use crate::glm::{fit_glm, Dataset, GlmFit};
use crate::priors::{resolve_prior, HyperRule};
use crate::special::{ln_beta, log_sum_exp};

pub const MAX_PREDICTORS: usize = 128;
pub const ENUMERATION_LIMIT: usize = 25;

/// A subset of predictors; bit `j` set means column `j` is included.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct ModelId(pub u128);

impl ModelId {
    pub const NULL: ModelId = ModelId(0);

    pub fn from_columns(columns: &[usize]) -> ModelId {
        ModelId(columns.iter().fold(0u128, |acc, &c| acc | (1u128 << c)))
    }

    pub fn columns(&self) -> Vec<usize> {
        (0..MAX_PREDICTORS).filter(|&j| self.contains(j)).collect()
    }

    pub fn size(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn contains(&self, j: usize) -> bool {
        j < MAX_PREDICTORS && (self.0 >> j) & 1 == 1
    }

    pub fn toggled(&self, j: usize) -> ModelId {
        ModelId(self.0 ^ (1u128 << j))
    }

    /// `p` characters, predictor one first.
    pub fn bitstring(&self, p: usize) -> String {
        (0..p).map(|j| if self.contains(j) { '1' } else { '0' }).collect()
    }

    pub fn parse_bitstring(s: &str) -> Result<ModelId> {
        if s.len() > MAX_PREDICTORS {
            return Err(Error::Validation(format!("bitstring longer than {MAX_PREDICTORS}")));
        }
        let mut bits = 0u128;
        for (j, ch) in s.chars().enumerate() {
            match ch {
                '1' => bits |= 1u128 << j,
                '0' => {}
                _ => return Err(Error::Validation(format!("invalid model bitstring `{s}`"))),
            }
        }
        Ok(ModelId(bits))
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cols: Vec<String> = self.columns().iter().map(|c| (c + 1).to_string()).collect();
        write!(f, "{{{}}}", cols.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ModelPrior {
    Uniform,
    BetaBinomial { a: f64, b: f64 },
}

impl ModelPrior {
    pub fn parse(name: &str, a: Option<f64>, b: Option<f64>) -> Result<ModelPrior> {
        match name.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "uniform" => Ok(ModelPrior::Uniform),
            "beta_binomial" | "bb" => {
                let (a, b) = (a.unwrap_or(1.0), b.unwrap_or(1.0));
                if !(a > 0.0 && b > 0.0) {
                    return Err(Error::Config("beta-binomial needs a, b > 0".into()));
                }
                Ok(ModelPrior::BetaBinomial { a, b })
            }
            other => Err(Error::Config(format!("unknown model prior `{other}`"))),
        }
    }
}

impl fmt::Display for ModelPrior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelPrior::Uniform => write!(f, "uniform"),
            ModelPrior::BetaBinomial { a, b } => write!(f, "beta-binomial({a},{b})"),
        }
    }
}

pub fn model_log_prior(model: ModelId, prior: &ModelPrior, p: usize) -> f64 {
    match *prior {
        ModelPrior::Uniform => -(p as f64) * std::f64::consts::LN_2,
        ModelPrior::BetaBinomial { a, b } => {
            let k = model.size() as f64;
            ln_beta(k + a, p as f64 - k + b) - ln_beta(a, b)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Coverage {
    ExactEnumeration,
    Mcmc {
        iterations: usize,
        seed: u64,
        unique_visits: usize,
        accepted: usize,
    },
}

#[derive(Debug, Clone)]
pub struct PosteriorEntry {
    pub model: ModelId,
    pub log_evidence: f64,
    pub log_prior: f64,
    pub probability: f64,
    pub evidence: Evidence,
    pub summary: Arc<ModelSummary>,
    /// MCMC visit count (zero under enumeration).
    pub visits: usize,
}

/// Normalized posterior over a set of evaluated models, sorted by `ModelId`.
#[derive(Debug, Clone)]
pub struct ModelPosterior {
    pub p: usize,
    pub rule: HyperRule,
    pub model_prior: ModelPrior,
    pub entries: Vec<PosteriorEntry>,
    pub coverage: Coverage,
    /// Models dropped because their fit or evidence failed.
    pub excluded: Vec<(ModelId, String)>,
}

impl ModelPosterior {
    fn from_entries(
        p: usize,
        rule: HyperRule,
        model_prior: ModelPrior,
        mut entries: Vec<PosteriorEntry>,
        coverage: Coverage,
        excluded: Vec<(ModelId, String)>,
    ) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Numeric("no model produced valid evidence".into()));
        }
        entries.sort_by_key(|e| e.model);
        let logs: Vec<f64> = entries.iter().map(|e| e.log_evidence + e.log_prior).collect();
        let total = log_sum_exp(&logs);
        if !total.is_finite() {
            return Err(Error::Numeric("posterior normalizer is not finite".into()));
        }
        for (e, l) in entries.iter_mut().zip(&logs) {
            e.probability = (l - total).exp();
        }
        Ok(ModelPosterior {
            p,
            rule,
            model_prior,
            entries,
            coverage,
            excluded,
        })
    }

    pub fn probability_of(&self, model: ModelId) -> f64 {
        self.entries
            .binary_search_by_key(&model, |e| e.model)
            .map_or(0.0, |i| self.entries[i].probability)
    }

    /// Highest-probability model; ties go to the smaller model, then the
    /// smaller `ModelId`.
    pub fn map_model(&self) -> ModelId {
        self.entries
            .iter()
            .max_by(|a, b| {
                a.probability
                    .total_cmp(&b.probability)
                    .then(b.model.size().cmp(&a.model.size()))
                    .then(b.model.cmp(&a.model))
            })
            .map(|e| e.model)
            .expect("posterior has entries")
    }

    /// The posterior collapsed onto its MAP model with probability one.
    pub fn map_only(&self) -> ModelPosterior {
        let map = self.map_model();
        let mut out = self.clone();
        out.entries.retain(|e| e.model == map);
        out.entries[0].probability = 1.0;
        out
    }

    /// Posterior behind coefficient estimates and predictions: information
    /// criteria use the MLE of their selected model, other rules average.
    pub fn for_estimation(&self) -> ModelPosterior {
        if matches!(self.rule, HyperRule::Aic | HyperRule::Bic) {
            self.map_only()
        } else {
            self.clone()
        }
    }

    pub fn any_rank_deficient(&self) -> bool {
        self.entries.iter().any(|e| e.evidence.diagnostics.used_generalized_inverse)
    }
}

/// Data, family and cached fits shared by searches over one dataset.
pub struct SearchContext<'a> {
    pub data: &'a Dataset,
    pub family: Family,
    pub null_fit: GlmFit,
    cache: Mutex<HashMap<ModelId, std::result::Result<Arc<ModelSummary>, Error>>>,
}

impl<'a> SearchContext<'a> {
    pub fn new(data: &'a Dataset, family: Family) -> Result<Self> {
        if data.p() > MAX_PREDICTORS {
            return Err(Error::Validation(format!(
                "at most {MAX_PREDICTORS} predictors are supported, got {}",
                data.p()
            )));
        }
        data.validate_for(&family)?;
        let null_fit = fit_glm(data, &family, &[])?;
        Ok(SearchContext {
            data,
            family,
            null_fit,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn p(&self) -> usize {
        self.data.p()
    }

    /// Fitted summary for `model`, computed at most once.
    pub fn summary(&self, model: ModelId) -> std::result::Result<Arc<ModelSummary>, Error> {
        if let Some(hit) = self.cache.lock().expect("cache lock").get(&model) {
            return hit.clone();
        }
        let value = summarize_model(self.data, &self.family, &model.columns(), &self.null_fit).map(Arc::new);
        self.cache
            .lock()
            .expect("cache lock")
            .entry(model)
            .or_insert(value)
            .clone()
    }

    pub fn cached_fits(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }

    fn evaluate(&self, model: ModelId, rule: &HyperRule) -> std::result::Result<(Evidence, Arc<ModelSummary>), Error> {
        let summary = self.summary(model)?;
        let ev = compute_evidence(&summary, &self.family, rule, self.p())?;
        Ok((ev, summary))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SearchOptions {
    /// Drop the null model from the model space (required for improper priors).
    pub exclude_null: bool,
}

fn check_rule(ctx: &SearchContext<'_>, rule: &HyperRule, opts: &SearchOptions) -> Result<()> {
    rule.check()?;
    if rule.is_mixture() && !opts.exclude_null {
        let probe = resolve_prior(rule, ctx.data.n(), 1, ctx.p());
        if let Ok(params) = probe {
            if !params.is_proper() {
                return Err(Error::Config(format!(
                    "{} is improper; exclude the null model to use it",
                    rule.label()
                )));
            }
        }
    }
    Ok(())
}

/// Fatal errors abort a search; per-model numerical failures only exclude.
fn is_fatal(err: &Error) -> bool {
    matches!(err, Error::Config(_) | Error::Validation(_))
}

/// Evidence, fit summary and log prior per visited model; `None` marks an excluded model.
type EvalCache = BTreeMap<ModelId, Option<(Evidence, Arc<ModelSummary>, f64)>>;

/// Evaluate every one of the `2^p` models.
pub fn enumerate_models(
    ctx: &SearchContext<'_>,
    rule: &HyperRule,
    prior: &ModelPrior,
    opts: &SearchOptions,
) -> Result<ModelPosterior> {
    let p = ctx.p();
    if p > ENUMERATION_LIMIT {
        return Err(Error::TooManyModels {
            p,
            limit: ENUMERATION_LIMIT,
        });
    }
    check_rule(ctx, rule, opts)?;
    let start = if opts.exclude_null { 1u128 } else { 0 };
    let ids: Vec<ModelId> = (start..(1u128 << p)).map(ModelId).collect();
    let results: Vec<_> = ids
        .par_iter()
        .map(|&m| (m, ctx.evaluate(m, rule)))
        .collect();
    let mut entries = Vec::with_capacity(results.len());
    let mut excluded = Vec::new();
    for (m, r) in results {
        match r {
            Ok((ev, summary)) => entries.push(PosteriorEntry {
                model: m,
                log_evidence: ev.log_bf_vs_null,
                log_prior: model_log_prior(m, prior, p),
                probability: 0.0,
                evidence: ev,
                summary,
                visits: 0,
            }),
            Err(e) if is_fatal(&e) => return Err(e),
            Err(e) => excluded.push((m, e.to_string())),
        }
    }
    ModelPosterior::from_entries(p, *rule, *prior, entries, Coverage::ExactEnumeration, excluded)
}

/// Probability of a single-bit flip proposal from a model of size `k`.
fn flip_probability(k: usize, p: usize) -> f64 {
    if k == 0 || k == p {
        1.0
    } else {
        0.9
    }
}

/// Metropolis–Hastings over models with flip (0.9) and swap (0.1) moves.
///
/// The posterior renormalizes exact evidences over every evaluated model;
/// visit counts only steer exploration.
pub fn mcmc_search(
    ctx: &SearchContext<'_>,
    rule: &HyperRule,
    prior: &ModelPrior,
    iterations: usize,
    seed: u64,
    opts: &SearchOptions,
) -> Result<ModelPosterior> {
    mcmc_search_from(ctx, rule, prior, iterations, seed, opts, None)
}

pub fn mcmc_search_from(
    ctx: &SearchContext<'_>,
    rule: &HyperRule,
    prior: &ModelPrior,
    iterations: usize,
    seed: u64,
    opts: &SearchOptions,
    start: Option<ModelId>,
) -> Result<ModelPosterior> {
    let p = ctx.p();
    if iterations == 0 {
        return Err(Error::Validation("iterations must be at least 1".into()));
    }
    if p == 0 {
        return Err(Error::Validation("MCMC needs at least one predictor".into()));
    }
    check_rule(ctx, rule, opts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut evaluated: EvalCache = BTreeMap::new();
    let mut excluded = Vec::new();
    let mut visits: HashMap<ModelId, usize> = HashMap::new();

    let target = |m: ModelId,
                      evaluated: &mut EvalCache,
                      excluded: &mut Vec<(ModelId, String)>|
     -> Result<f64> {
        if opts.exclude_null && m == ModelId::NULL {
            return Ok(f64::NEG_INFINITY);
        }
        if let Some(slot) = evaluated.get(&m) {
            return Ok(slot.as_ref().map_or(f64::NEG_INFINITY, |s| s.2));
        }
        match ctx.evaluate(m, rule) {
            Ok((ev, summary)) => {
                let lp = ev.log_bf_vs_null + model_log_prior(m, prior, p);
                evaluated.insert(m, Some((ev, summary, lp)));
                Ok(lp)
            }
            Err(e) if is_fatal(&e) => Err(e),
            Err(e) => {
                excluded.push((m, e.to_string()));
                evaluated.insert(m, None);
                Ok(f64::NEG_INFINITY)
            }
        }
    };

    let mut current = start.unwrap_or(if opts.exclude_null {
        ModelId::NULL.toggled(0)
    } else {
        ModelId::NULL
    });
    let mut current_lp = target(current, &mut evaluated, &mut excluded)?;
    let mut accepted = 0;
    for _ in 0..iterations {
        let k = current.size();
        let flip = k == 0 || k == p || rng.random::<f64>() < 0.9;
        let (proposal, log_hastings) = if flip {
            let j = rng.random_range(0..p);
            let next = current.toggled(j);
            let ratio = flip_probability(next.size(), p) / flip_probability(k, p);
            (next, ratio.ln())
        } else {
            let inc = current.columns();
            let exc: Vec<usize> = (0..p).filter(|j| !current.contains(*j)).collect();
            let a = inc[rng.random_range(0..inc.len())];
            let b = exc[rng.random_range(0..exc.len())];
            (current.toggled(a).toggled(b), 0.0)
        };
        let lp = target(proposal, &mut evaluated, &mut excluded)?;
        let log_alpha = lp - current_lp + log_hastings;
        if lp > f64::NEG_INFINITY && (log_alpha >= 0.0 || rng.random::<f64>().ln() < log_alpha) {
            current = proposal;
            current_lp = lp;
            accepted += 1;
        }
        *visits.entry(current).or_insert(0) += 1;
    }

    let unique_visits = visits.len();
    let entries: Vec<PosteriorEntry> = evaluated
        .into_iter()
        .filter_map(|(m, slot)| {
            slot.map(|(ev, summary, _)| PosteriorEntry {
                model: m,
                log_evidence: ev.log_bf_vs_null,
                log_prior: model_log_prior(m, prior, p),
                probability: 0.0,
                evidence: ev,
                summary,
                visits: visits.get(&m).copied().unwrap_or(0),
            })
        })
        .collect();
    ModelPosterior::from_entries(
        p,
        *rule,
        *prior,
        entries,
        Coverage::Mcmc {
            iterations,
            seed,
            unique_visits,
            accepted,
        },
        excluded,
    )
}

/// `pip_j = Σ_{M ∋ j} p(M | Y)`.
pub fn inclusion_probabilities(post: &ModelPosterior) -> Vec<f64> {
    let mut pip = vec![0.0; post.p];
    for e in &post.entries {
        for j in e.model.columns() {
            pip[j] += e.probability;
        }
    }
    pip
}

/// Model-averaged intercept and coefficients `Σ p(M|Y)·shrink·β̂_M`, with
/// zeros for excluded predictors. Element zero is the intercept.
pub fn bma_coefficients(post: &ModelPosterior) -> Vec<f64> {
    let mut out = vec![0.0; post.p + 1];
    for e in &post.entries {
        let shrink = e.evidence.shrink_mean;
        out[0] += e.probability * e.summary.shrunk_intercept(shrink);
        for (b, &j) in e.summary.beta.iter().zip(&e.summary.columns) {
            out[j + 1] += e.probability * shrink * b;
        }
    }
    out
}

/// Model-averaged estimate of `g` from the posterior means of
/// `u = 1/(1+g)`, over non-null models renormalized.
pub fn bma_g_estimate(post: &ModelPosterior) -> Option<f64> {
    let mut weight = 0.0;
    let mut u = 0.0;
    for e in post.entries.iter().filter(|e| e.summary.stats.rank > 0) {
        weight += e.probability;
        u += e.probability * (1.0 - e.evidence.shrink_mean);
    }
    if weight <= 0.0 {
        return None;
    }
    let u = u / weight;
    (u > 0.0).then(|| 1.0 / u - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    /// Model-averaged mean `Σ p(M|Y)·g⁻¹(η̃_M)`.
    pub mean: f64,
    /// Model-averaged linear predictor `Σ p(M|Y)·η̃_M`.
    pub eta: f64,
}

/// Plug-in model-averaged predictions for the rows of `new_x`.
pub fn bma_predict(
    post: &ModelPosterior,
    family: &Family,
    new_x: &DMatrix<f64>,
    offset: Option<&[f64]>,
) -> Result<Vec<Prediction>> {
    if new_x.ncols() != post.p {
        return Err(Error::Validation(format!(
            "new data has {} columns, the model space has {}",
            new_x.ncols(),
            post.p
        )));
    }
    if let Some(off) = offset {
        if off.len() != new_x.nrows() {
            return Err(Error::Validation("offset length differs from new data".into()));
        }
    }
    let mut out = vec![Prediction { mean: 0.0, eta: 0.0 }; new_x.nrows()];
    for e in &post.entries {
        let shrink = e.evidence.shrink_mean;
        let alpha = e.summary.shrunk_intercept(shrink);
        for (i, pred) in out.iter_mut().enumerate() {
            let mut eta = alpha + offset.map_or(0.0, |o| o[i]);
            for (b, &j) in e.summary.beta.iter().zip(&e.summary.columns) {
                eta += shrink * b * new_x[(i, j)];
            }
            pred.eta += e.probability * eta;
            pred.mean += e.probability * family.linkinv(eta);
        }
    }
    Ok(out)
}

/// Total-variation distance between two posteriors over the union of their
/// supports.
pub fn total_variation(a: &ModelPosterior, b: &ModelPosterior) -> f64 {
    let mut probs: BTreeMap<ModelId, (f64, f64)> = BTreeMap::new();
    for e in &a.entries {
        probs.entry(e.model).or_default().0 = e.probability;
    }
    for e in &b.entries {
        probs.entry(e.model).or_default().1 = e.probability;
    }
    0.5 * probs.values().map(|(x, y)| (x - y).abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn model_id_roundtrip() {
        let m = ModelId::from_columns(&[0, 3, 5]);
        assert_eq!(m.columns(), vec![0, 3, 5]);
        assert_eq!(m.bitstring(6), "100101");
        assert_eq!(ModelId::parse_bitstring("100101").unwrap(), m);
        assert_eq!(m.to_string(), "{1,4,6}");
        assert_eq!(m.size(), 3);
    }

    #[test]
    fn priors_on_model_space() {
        let v = model_log_prior(ModelId(0), &ModelPrior::Uniform, 20);
        assert!((v + 20.0 * 2f64.ln()).abs() < 1e-12);
        let bb = ModelPrior::BetaBinomial { a: 1.0, b: 1.0 };
        let v = model_log_prior(ModelId::from_columns(&[1]), &bb, 2);
        assert!((v - (1.0f64 / 6.0).ln()).abs() < 1e-14);
        let total: f64 = (0..1u128 << 10)
            .map(|b| model_log_prior(ModelId(b), &bb, 10).exp())
            .sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn enumeration_guard() {
        let n = 30;
        let x = DMatrix::from_fn(n, 26, |i, j| ((i * 7 + j * 13) % 11) as f64);
        let y = DVector::from_fn(n, |i, _| (i % 2) as f64);
        let data = Dataset::unnamed(y, x).unwrap();
        let ctx = SearchContext::new(&data, Family::logistic()).unwrap();
        let err = enumerate_models(&ctx, &HyperRule::Bic, &ModelPrior::Uniform, &SearchOptions::default());
        assert!(matches!(err, Err(Error::TooManyModels { .. })));
    }
}
