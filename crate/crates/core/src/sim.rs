//! Simulation scenarios, selection experiments and bootstrap
//! cross-validation of model-averaged predictions.

use std::fmt;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{Family, FamilyKind};
use crate::glm::{fit_glm, Dataset};
use crate::priors::HyperRule;
use crate::search::{
    bma_coefficients, bma_predict, enumerate_models, mcmc_search_from, ModelId, ModelPosterior, ModelPrior,
    SearchContext, SearchOptions,
};

/// Non-zero coefficient block repeated across active groups of five.
pub const COEFFICIENT_BLOCK: [f64; 5] = [2.0, -1.0, -1.0, 0.5, -0.5];
pub const TRUE_INTERCEPT: f64 = -0.5;
/// Scaling applied to every true coefficient in Poisson scenarios.
pub const POISSON_SCALE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Null,
    Sparse,
    Medium,
    Full,
}

impl ScenarioKind {
    pub fn parse(name: &str) -> Result<ScenarioKind> {
        match name.trim().to_ascii_lowercase().as_str() {
            "null" => Ok(ScenarioKind::Null),
            "sparse" => Ok(ScenarioKind::Sparse),
            "medium" => Ok(ScenarioKind::Medium),
            "full" => Ok(ScenarioKind::Full),
            other => Err(Error::Config(format!("unknown scenario '{other}'"))),
        }
    }

    /// Whether the block of predictors `5b..5b+5` carries the signal.
    fn block_active(self, block: usize) -> bool {
        match self {
            ScenarioKind::Null => false,
            ScenarioKind::Sparse => block == 0,
            ScenarioKind::Medium => block == 0 || block == 2,
            ScenarioKind::Full => block < 4,
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioKind::Null => "null",
            ScenarioKind::Sparse => "sparse",
            ScenarioKind::Medium => "medium",
            ScenarioKind::Full => "full",
        })
    }
}

/// A data-generating configuration. Predictors beyond the twentieth are
/// always inactive; smaller `p` truncates the coefficient pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub p: usize,
    pub n: usize,
    pub corr_r: f64,
    pub family: Family,
    pub seed: u64,
}

impl Scenario {
    pub fn new(kind: ScenarioKind, p: usize, n: usize, corr_r: f64, family: Family, seed: u64) -> Result<Self> {
        if p == 0 || p > crate::search::MAX_PREDICTORS {
            return Err(Error::Validation(format!("p must be in 1..=128, got {p}")));
        }
        if n < 3 {
            return Err(Error::Validation(format!("n must be at least 3, got {n}")));
        }
        if !(0.0..1.0).contains(&corr_r) {
            return Err(Error::Validation(format!("correlation must lie in [0, 1), got {corr_r}")));
        }
        if family.unknown_variance() || family.overdispersed {
            return Err(Error::Validation("scenarios simulate binomial, Poisson or unit-variance Gaussian data".into()));
        }
        Ok(Scenario {
            kind,
            p,
            n,
            corr_r,
            family,
            seed,
        })
    }

    fn scale(&self) -> f64 {
        if self.family.kind == FamilyKind::PoissonLog {
            POISSON_SCALE
        } else {
            1.0
        }
    }

    pub fn true_intercept(&self) -> f64 {
        TRUE_INTERCEPT * self.scale()
    }

    pub fn true_beta(&self) -> Vec<f64> {
        (0..self.p)
            .map(|j| {
                if j < 20 && self.kind.block_active(j / 5) {
                    COEFFICIENT_BLOCK[j % 5] * self.scale()
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Intercept followed by slopes.
    pub fn true_coefficients(&self) -> Vec<f64> {
        let mut out = vec![self.true_intercept()];
        out.extend(self.true_beta());
        out
    }

    pub fn true_model(&self) -> ModelId {
        let cols: Vec<usize> = self
            .true_beta()
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != 0.0)
            .map(|(j, _)| j)
            .collect();
        ModelId::from_columns(&cols)
    }

    /// Draw the dataset for one replicate.
    pub fn simulate(&self, replicate: u64) -> Result<Dataset> {
        let mut rng = task_rng(self.seed, replicate);
        let x = gen_design_with(self.n, self.p, self.corr_r, &mut rng)?;
        let beta = DVector::from_vec(self.true_beta());
        let eta = (&x * &beta).add_scalar(self.true_intercept());
        let y = DVector::from_fn(self.n, |i, _| {
            let mu = self.family.linkinv(eta[i]);
            match self.family.kind {
                FamilyKind::BinomialLogit | FamilyKind::BinomialProbit => {
                    let d = Bernoulli::new(mu.clamp(0.0, 1.0)).expect("probability in range");
                    if d.sample(&mut rng) {
                        1.0
                    } else {
                        0.0
                    }
                }
                FamilyKind::PoissonLog => {
                    if mu <= 0.0 {
                        0.0
                    } else {
                        Poisson::new(mu).expect("positive rate").sample(&mut rng)
                    }
                }
                FamilyKind::GaussianIdentity => {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    mu + z
                }
            }
        });
        Dataset::unnamed(y, x)
    }
}

/// Independent generator for task `index` of a run seeded with `seed`.
pub fn task_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Standard normal rows with `cor(X_i, X_j) = r^{|i−j|}`.
pub fn gen_design(n: usize, p: usize, corr_r: f64, seed: u64) -> Result<DMatrix<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gen_design_with(n, p, corr_r, &mut rng)
}

fn gen_design_with<R: Rng>(n: usize, p: usize, corr_r: f64, rng: &mut R) -> Result<DMatrix<f64>> {
    if !(0.0..1.0).contains(&corr_r) {
        return Err(Error::Validation(format!("correlation must lie in [0, 1), got {corr_r}")));
    }
    let corr = DMatrix::from_fn(p, p, |i, j| corr_r.powi(i.abs_diff(j) as i32));
    let chol = corr
        .cholesky()
        .ok_or_else(|| Error::Numeric("correlation matrix is not positive definite".into()))?;
    let z = DMatrix::from_fn(n, p, |_, _| {
        let v: f64 = StandardNormal.sample(rng);
        v
    });
    Ok(z * chol.l().transpose())
}

/// A named evidence rule compared in an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Method {
    pub name: String,
    pub rule: HyperRule,
}

impl Method {
    pub fn new(rule: HyperRule) -> Method {
        Method {
            name: rule.label(),
            rule,
        }
    }
}

/// How each replicate explores the model space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SearchStrategy {
    /// Enumerate when `p` allows it, otherwise MCMC with the given length.
    Auto { iterations: usize },
    Enumerate,
    Mcmc { iterations: usize },
}

impl Default for SearchStrategy {
    fn default() -> Self {
        SearchStrategy::Auto { iterations: 1 << 17 }
    }
}

/// Largest `p` that automatic search still enumerates.
pub const AUTO_ENUMERATION_MAX: usize = 16;

/// Posterior under `strategy`. The Jeffreys prior always drops the null model.
pub fn search_posterior(
    ctx: &SearchContext<'_>,
    rule: &HyperRule,
    prior: &ModelPrior,
    strategy: SearchStrategy,
    seed: u64,
    opts: SearchOptions,
) -> Result<ModelPosterior> {
    let opts = SearchOptions {
        exclude_null: opts.exclude_null || matches!(rule, HyperRule::Jeffreys),
    };
    let enumerate = match strategy {
        SearchStrategy::Auto { .. } => ctx.p() <= AUTO_ENUMERATION_MAX,
        SearchStrategy::Enumerate => true,
        SearchStrategy::Mcmc { .. } => false,
    };
    if enumerate {
        enumerate_models(ctx, rule, prior, &opts)
    } else {
        let iterations = match strategy {
            SearchStrategy::Auto { iterations } | SearchStrategy::Mcmc { iterations } => iterations,
            SearchStrategy::Enumerate => unreachable!(),
        };
        let start = if opts.exclude_null { None } else { Some(ModelId::NULL) };
        mcmc_search_from(ctx, rule, prior, iterations, seed, &opts, start)
    }
}

/// Aggregate performance of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    /// Replicates or resamples that completed.
    pub completed: usize,
    pub failures: usize,
    /// Number of completed runs whose highest-probability model is the truth.
    pub selection_hits: Option<usize>,
    /// Mean size of the highest-probability model.
    pub avg_model_size: f64,
    /// Mean `Σ_j (β̃_j − β*_j)²` over coefficients including the intercept.
    pub sse: Option<f64>,
    pub auc: Option<f64>,
    pub calib_slope: Option<f64>,
    /// Mean negative log predictive density.
    pub log_score: Option<f64>,
    pub brier: Option<f64>,
    /// Mean posterior probability of the true model.
    pub true_model_probability: Option<f64>,
}

impl MetricsReport {
    pub fn hit_fraction(&self) -> Option<f64> {
        self.selection_hits
            .map(|h| if self.completed == 0 { 0.0 } else { h as f64 / self.completed as f64 })
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct ReplicateOutcome {
    hit: bool,
    size: usize,
    sse: f64,
    true_prob: f64,
}

fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

/// Simulate `replicates` datasets and score each method's selection and
/// coefficient estimates against the truth.
pub fn run_selection_experiment(
    scenario: &Scenario,
    methods: &[Method],
    model_prior: &ModelPrior,
    replicates: usize,
    strategy: SearchStrategy,
) -> Result<Vec<MetricsReport>> {
    if replicates == 0 {
        return Err(Error::Validation("replicates must be at least 1".into()));
    }
    if methods.is_empty() {
        return Err(Error::Validation("no methods given".into()));
    }
    for m in methods {
        m.rule.check()?;
    }
    let truth = scenario.true_model();
    let coefs = scenario.true_coefficients();
    let per_rep: Vec<Result<Vec<Result<ReplicateOutcome>>>> = (0..replicates)
        .into_par_iter()
        .map(|rep| {
            let data = scenario.simulate(rep as u64)?;
            let ctx = SearchContext::new(&data, scenario.family)?;
            let search_seed = task_rng(scenario.seed ^ 0xA5A5_5A5A_0F0F_F0F0, rep as u64).random::<u64>();
            Ok(methods
                .iter()
                .map(|m| {
                    let post = search_posterior(&ctx, &m.rule, model_prior, strategy, search_seed, SearchOptions::default())?;
                    let map = post.map_model();
                    let est = bma_coefficients(&post.for_estimation());
                    let sse = est.iter().zip(&coefs).map(|(a, b)| (a - b).powi(2)).sum();
                    Ok(ReplicateOutcome {
                        hit: map == truth,
                        size: map.size(),
                        sse,
                        true_prob: post.probability_of(truth),
                    })
                })
                .collect())
        })
        .collect();
    let mut reports = Vec::with_capacity(methods.len());
    for (k, m) in methods.iter().enumerate() {
        let mut outcomes = Vec::new();
        let mut failures = 0;
        for (rep, r) in per_rep.iter().enumerate() {
            let res = match r {
                Ok(v) => v[k].as_ref().map_err(|e| e.to_string()),
                Err(e) => Err(e.to_string()),
            };
            match res {
                Ok(o) => outcomes.push(*o),
                Err(e) => {
                    warn!("replicate {rep} failed for {}: {e}", m.name);
                    failures += 1;
                }
            }
        }
        let sizes: Vec<f64> = outcomes.iter().map(|o| o.size as f64).collect();
        let sses: Vec<f64> = outcomes.iter().map(|o| o.sse).collect();
        let probs: Vec<f64> = outcomes.iter().map(|o| o.true_prob).collect();
        reports.push(MetricsReport {
            method: m.name.clone(),
            completed: outcomes.len(),
            failures,
            selection_hits: Some(outcomes.iter().filter(|o| o.hit).count()),
            avg_model_size: mean(&sizes).unwrap_or(f64::NAN),
            sse: mean(&sses),
            auc: None,
            calib_slope: None,
            log_score: None,
            brier: None,
            true_model_probability: mean(&probs),
        });
    }
    Ok(reports)
}

// ---------------------------------------------------------------------------
// Prediction metrics

fn check_binary(y: &[f64], mu: &[f64]) -> Result<()> {
    if y.len() != mu.len() || y.is_empty() {
        return Err(Error::Validation("outcomes and predictions must be non-empty and equally long".into()));
    }
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Validation("metrics need 0/1 outcomes".into()));
    }
    Ok(())
}

/// Area under the ROC curve by the rank-sum statistic with mid-ranks.
pub fn auc(y: &[f64], score: &[f64]) -> Result<f64> {
    check_binary(y, score)?;
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| score[a].total_cmp(&score[b]));
    let mut ranks = vec![0.0; y.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && score[order[j + 1]] == score[order[i]] {
            j += 1;
        }
        let mid = 0.5 * (i + j) as f64 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = mid;
        }
        i = j + 1;
    }
    let pos = y.iter().filter(|&&v| v == 1.0).count() as f64;
    let neg = y.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return Err(Error::Validation("AUC needs both outcome classes".into()));
    }
    let rank_sum: f64 = y.iter().zip(&ranks).filter(|(v, _)| **v == 1.0).map(|(_, r)| r).sum();
    Ok((rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg))
}

/// Mean squared difference between predicted probabilities and outcomes.
pub fn brier(y: &[f64], mu: &[f64]) -> Result<f64> {
    check_binary(y, mu)?;
    Ok(y.iter().zip(mu).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64)
}

/// Mean negative log predictive probability of the observed outcomes.
pub fn log_score(y: &[f64], mu: &[f64]) -> Result<f64> {
    check_binary(y, mu)?;
    let total: f64 = y
        .iter()
        .zip(mu)
        .map(|(&v, &m)| {
            let m = m.clamp(1e-300, 1.0 - 1e-16);
            -(if v == 1.0 { m.ln() } else { (-m).ln_1p() })
        })
        .sum();
    Ok(total / y.len() as f64)
}

/// Slope of a logistic regression of the outcomes on the predicted log-odds.
pub fn calibration_slope(y: &[f64], mu: &[f64]) -> Result<f64> {
    check_binary(y, mu)?;
    let logit: Vec<f64> = mu
        .iter()
        .map(|&m| {
            let m = m.clamp(1e-15, 1.0 - 1e-15);
            (m / (1.0 - m)).ln()
        })
        .collect();
    let data = Dataset::unnamed(DVector::from_column_slice(y), DMatrix::from_column_slice(y.len(), 1, &logit))?;
    let fit = fit_glm(&data, &Family::logistic(), &[0])?;
    if fit.separation == crate::glm::Separation::Complete {
        return Err(Error::Separation {
            model: "calibration".into(),
        });
    }
    Ok(fit.beta[0])
}

fn subset(data: &Dataset, rows: &[usize]) -> Result<Dataset> {
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| data.y[i]));
    let x = DMatrix::from_fn(rows.len(), data.p(), |r, j| data.x[(rows[r], j)]);
    let w = DVector::from_iterator(rows.len(), rows.iter().map(|&i| data.weights[i]));
    let mut out = Dataset::new(y, x, data.names.clone())?.with_weights(w)?;
    if let Some(off) = &data.offset {
        out = out.with_offset(DVector::from_iterator(rows.len(), rows.iter().map(|&i| off[i])))?;
    }
    Ok(out)
}

/// Draw a bootstrap resample and its out-of-bag rows, redrawing while the
/// out-of-bag set is empty.
pub fn bootstrap_split<R: Rng>(n: usize, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    loop {
        let draws: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let mut seen = vec![false; n];
        for &i in &draws {
            seen[i] = true;
        }
        let oob: Vec<usize> = (0..n).filter(|&i| !seen[i]).collect();
        if !oob.is_empty() {
            return (draws, oob);
        }
        warn!("bootstrap resample left no out-of-bag rows; redrawing");
    }
}

#[derive(Debug, Clone, Copy)]
struct FoldMetrics {
    size: f64,
    auc: f64,
    calib: f64,
    log_score: f64,
    brier: f64,
}

/// Bootstrap cross-validation of model-averaged predictions for binary
/// outcomes: fit on each resample and score the out-of-bag rows.
pub fn bootstrap_cv(
    data: &Dataset,
    family: &Family,
    methods: &[Method],
    model_prior: &ModelPrior,
    resamples: usize,
    seed: u64,
    strategy: SearchStrategy,
) -> Result<Vec<MetricsReport>> {
    if resamples == 0 {
        return Err(Error::Validation("need at least one resample".into()));
    }
    if !family.kind.is_binomial() || data.weights.iter().any(|&w| w != 1.0) {
        return Err(Error::Validation("bootstrap cross-validation needs 0/1 outcomes".into()));
    }
    data.validate_for(family)?;
    let per_fold: Vec<Result<Vec<Result<FoldMetrics>>>> = (0..resamples)
        .into_par_iter()
        .map(|b| {
            let mut rng = task_rng(seed, b as u64);
            let (train_rows, oob) = bootstrap_split(data.n(), &mut rng);
            let search_seed: u64 = rng.random();
            let train = subset(data, &train_rows)?;
            let ctx = SearchContext::new(&train, *family)?;
            let x_oob = DMatrix::from_fn(oob.len(), data.p(), |r, j| data.x[(oob[r], j)]);
            let off: Option<Vec<f64>> = data.offset.as_ref().map(|o| oob.iter().map(|&i| o[i]).collect());
            let y_oob: Vec<f64> = oob.iter().map(|&i| data.y[i]).collect();
            Ok(methods
                .iter()
                .map(|m| {
                    let post = search_posterior(&ctx, &m.rule, model_prior, strategy, search_seed, SearchOptions::default())?;
                    let pred = bma_predict(&post.for_estimation(), family, &x_oob, off.as_deref())?;
                    let mu: Vec<f64> = pred.iter().map(|p| p.mean).collect();
                    Ok(FoldMetrics {
                        size: post.map_model().size() as f64,
                        auc: auc(&y_oob, &mu)?,
                        calib: calibration_slope(&y_oob, &mu)?,
                        log_score: log_score(&y_oob, &mu)?,
                        brier: brier(&y_oob, &mu)?,
                    })
                })
                .collect())
        })
        .collect();
    let mut reports = Vec::with_capacity(methods.len());
    for (k, m) in methods.iter().enumerate() {
        let mut folds = Vec::new();
        let mut failures = 0;
        for (b, r) in per_fold.iter().enumerate() {
            let res = match r {
                Ok(v) => v[k].as_ref().map_err(|e| e.to_string()),
                Err(e) => Err(e.to_string()),
            };
            match res {
                Ok(f) => folds.push(*f),
                Err(e) => {
                    warn!("resample {b} failed for {}: {e}", m.name);
                    failures += 1;
                }
            }
        }
        let col = |f: fn(&FoldMetrics) -> f64| mean(&folds.iter().map(f).collect::<Vec<_>>());
        reports.push(MetricsReport {
            method: m.name.clone(),
            completed: folds.len(),
            failures,
            selection_hits: None,
            avg_model_size: col(|f| f.size).unwrap_or(f64::NAN),
            sse: None,
            auc: col(|f| f.auc),
            calib_slope: col(|f| f.calib),
            log_score: col(|f| f.log_score),
            brier: col(|f| f.brier),
            true_model_probability: None,
        });
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_coefficients_follow_blocks() {
        let s = Scenario::new(ScenarioKind::Medium, 20, 100, 0.0, Family::logistic(), 1).unwrap();
        let b = s.true_beta();
        assert_eq!(&b[0..5], &COEFFICIENT_BLOCK);
        assert!(b[5..10].iter().all(|&v| v == 0.0));
        assert_eq!(&b[10..15], &COEFFICIENT_BLOCK);
        assert_eq!(s.true_model().size(), 10);
        let pois = Scenario::new(ScenarioKind::Sparse, 20, 100, 0.0, Family::poisson(), 1).unwrap();
        assert!((pois.true_intercept() + 0.1).abs() < 1e-15);
        assert!((pois.true_beta()[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn auc_handles_ties() {
        let y = [0.0, 1.0, 0.0, 1.0];
        assert_eq!(auc(&y, &[0.1, 0.9, 0.2, 0.8]).unwrap(), 1.0);
        assert_eq!(auc(&y, &[0.5; 4]).unwrap(), 0.5);
    }
}
