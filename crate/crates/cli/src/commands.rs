//! Subcommand implementations.

use std::path::Path;
use std::time::Instant;

use chic_core::oracles::self_check;
use chic_core::search::{
    bma_coefficients, bma_g_estimate, inclusion_probabilities, ModelPosterior, SearchContext,
    SearchOptions,
};
use chic_core::sim::{bootstrap_cv, run_selection_experiment, search_posterior, MetricsReport, Scenario};
use chic_core::{Dataset, Family};
use log::{info, warn};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::ConfigMap;
use crate::data::{build_dataset, read_table, Roles};
use crate::error::{CliError, CliResult};
use crate::output::{ensure_dir, num, opt_num, write_csv, write_json};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Everything `predict` needs, written next to the selection reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorFile {
    pub version: String,
    pub family: Family,
    pub predictors: Vec<String>,
    pub offset: Option<String>,
    pub models: Vec<PredictorModel>,
}

/// One model's plug-in predictor with shrinkage already applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorModel {
    pub model: String,
    pub probability: f64,
    pub intercept: f64,
    pub columns: Vec<usize>,
    pub coefficients: Vec<f64>,
}

impl PredictorFile {
    fn from_posterior(post: &ModelPosterior, family: Family, data: &Dataset, offset: Option<&str>) -> Self {
        let models = post
            .entries
            .iter()
            .map(|e| {
                let shrink = e.evidence.shrink_mean;
                PredictorModel {
                    model: e.model.bitstring(post.p),
                    probability: e.probability,
                    intercept: e.summary.shrunk_intercept(shrink),
                    columns: e.summary.columns.clone(),
                    coefficients: e.summary.beta.iter().map(|b| shrink * b).collect(),
                }
            })
            .collect();
        PredictorFile {
            version: VERSION.to_string(),
            family,
            predictors: data.names.clone(),
            offset: offset.map(String::from),
            models,
        }
    }

    /// Model-averaged means and linear predictors for the rows of `x`.
    pub fn predict(&self, x: &DMatrix<f64>, offset: Option<&[f64]>) -> Vec<(f64, f64)> {
        let mut out = vec![(0.0, 0.0); x.nrows()];
        for m in &self.models {
            for (i, slot) in out.iter_mut().enumerate() {
                let mut eta = m.intercept + offset.map_or(0.0, |o| o[i]);
                for (b, &j) in m.coefficients.iter().zip(&m.columns) {
                    eta += b * x[(i, j)];
                }
                slot.0 += m.probability * self.family.linkinv(eta);
                slot.1 += m.probability * eta;
            }
        }
        out
    }
}

fn roles(cfg: &ConfigMap) -> Roles<'_> {
    Roles {
        response: cfg.get("response").unwrap_or("y"),
        weights: cfg.get("weights"),
        offset: cfg.get("offset"),
        predictors: cfg
            .get("predictors")
            .map(|p| p.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()),
    }
}

fn load_data(cfg: &ConfigMap, family: &Family) -> CliResult<Dataset> {
    let path = Path::new(cfg.required("data")?);
    let table = read_table(path)?;
    let data = build_dataset(&table, &roles(cfg))?;
    data.validate_for(family)?;
    Ok(data)
}

/// Fill defaults into the map so `run.json` replays exactly.
fn record_defaults(cfg: &mut ConfigMap, keys: &[(&str, String)]) -> CliResult<()> {
    for (k, v) in keys {
        if cfg.get(k).is_none() {
            cfg.set(k, v.clone())?;
        }
    }
    Ok(())
}

fn model_rows(post: &ModelPosterior) -> Vec<Vec<String>> {
    let mut order: Vec<usize> = (0..post.entries.len()).collect();
    order.sort_by(|&a, &b| {
        let (ea, eb) = (&post.entries[a], &post.entries[b]);
        eb.probability.total_cmp(&ea.probability).then(ea.model.cmp(&eb.model))
    });
    order
        .into_iter()
        .map(|i| {
            let e = &post.entries[i];
            vec![
                e.model.bitstring(post.p),
                e.model.size().to_string(),
                e.evidence.rank.to_string(),
                num(e.log_evidence),
                num(e.log_prior),
                num(e.probability),
                num(e.evidence.shrink_mean),
            ]
        })
        .collect()
}

pub fn select(mut cfg: ConfigMap) -> CliResult<()> {
    let started = Instant::now();
    let family = cfg.family()?;
    let rule = cfg.prior()?;
    let model_prior = cfg.model_prior()?;
    let strategy = cfg.strategy()?;
    let seed = cfg.seed()?;
    let opts = SearchOptions {
        exclude_null: cfg.flag("exclude_null")?,
    };
    let data = load_data(&cfg, &family)?;
    record_defaults(
        &mut cfg,
        &[
            ("response", "y".into()),
            ("family", family.kind.name().into()),
            ("prior", rule.label()),
            ("model_prior", model_prior.to_string()),
            ("seed", seed.to_string()),
        ],
    )?;
    let out = cfg.out_dir();
    ensure_dir(&out)?;
    info!("n = {}, p = {}, family {}, prior {}", data.n(), data.p(), family.kind.name(), rule.label());

    let ctx = SearchContext::new(&data, family)?;
    let post = search_posterior(&ctx, &rule, &model_prior, strategy, seed, opts)?;
    for e in &post.entries {
        if let Some(prior) = &e.evidence.prior {
            info!("model {} (p_M = {}): resolved prior {prior}", e.model, e.evidence.rank);
        }
        if e.evidence.diagnostics.numeric_warning {
            warn!("model {}: special-function cross-check disagreed", e.model);
        }
        if e.evidence.diagnostics.separation_quasi {
            warn!("model {}: quasi-complete separation", e.model);
        }
    }
    for (m, why) in &post.excluded {
        warn!("model {m} excluded: {why}");
    }
    if post.any_rank_deficient() {
        warn!("some models have linearly dependent columns; a generalized inverse was used");
    }

    write_csv(
        &out.join("models.csv"),
        &["model", "size", "rank", "log_bf", "log_prior", "posterior_probability", "shrinkage"],
        &model_rows(&post),
    )?;
    let pips = inclusion_probabilities(&post);
    let pip_rows: Vec<Vec<String>> = data.names.iter().zip(&pips).map(|(n, p)| vec![n.clone(), num(*p)]).collect();
    write_csv(&out.join("pips.csv"), &["predictor", "inclusion_probability"], &pip_rows)?;
    let estimation = post.for_estimation();
    let coefs = bma_coefficients(&estimation);
    let mut coef_rows = vec![vec!["(intercept)".to_string(), num(coefs[0])]];
    coef_rows.extend(data.names.iter().zip(&coefs[1..]).map(|(n, c)| vec![n.clone(), num(*c)]));
    write_csv(&out.join("bma_coefficients.csv"), &["term", "estimate"], &coef_rows)?;

    let predictor = PredictorFile::from_posterior(&estimation, family, &data, cfg.get("offset"));
    let offset: Option<Vec<f64>> = data.offset.as_ref().map(|o| o.iter().copied().collect());
    let fitted_rows: Vec<Vec<String>> = predictor
        .predict(&data.x, offset.as_deref())
        .iter()
        .enumerate()
        .map(|(i, (m, e))| vec![i.to_string(), num(*m), num(*e)])
        .collect();
    write_csv(&out.join("fitted.csv"), &["row", "mean", "linear_predictor"], &fitted_rows)?;

    write_json(&out.join("predictor.json"), &predictor)?;
    let run = json!({
        "command": "select",
        "version": VERSION,
        "config": cfg.values,
        "seed": seed,
        "n": data.n(),
        "p": data.p(),
        "coverage": post.coverage,
        "models_evaluated": post.entries.len(),
        "models_excluded": post.excluded.len(),
        "map_model": post.map_model().bitstring(post.p),
        "g_estimate": bma_g_estimate(&post),
        "timing_seconds": started.elapsed().as_secs_f64(),
    });
    write_json(&out.join("run.json"), &run)
}

pub fn predict(run_dir: &Path, data_path: &Path, out: Option<&Path>) -> CliResult<()> {
    let path = run_dir.join("predictor.json");
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let predictor: PredictorFile =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let table = read_table(data_path)?;
    let missing: Vec<&str> = predictor
        .predictors
        .iter()
        .chain(predictor.offset.iter())
        .filter(|n| table.column_index(n).is_none())
        .map(String::as_str)
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Config(format!(
            "{} lacks columns required by the fitted models: {}",
            data_path.display(),
            missing.join(", ")
        )));
    }
    let cols: Vec<Vec<f64>> = predictor.predictors.iter().map(|n| table.column(n)).collect::<CliResult<_>>()?;
    let x = DMatrix::from_fn(table.rows.len(), cols.len(), |i, j| cols[j][i]);
    let offset = predictor.offset.as_ref().map(|o| table.column(o)).transpose()?;
    let preds = predictor.predict(&x, offset.as_deref());
    let rows: Vec<Vec<String>> = preds
        .iter()
        .enumerate()
        .map(|(i, (m, e))| vec![i.to_string(), num(*m), num(*e)])
        .collect();
    let target = out.map(Path::to_path_buf).unwrap_or_else(|| run_dir.join("predictions.csv"));
    write_csv(&target, &["row", "mean", "linear_predictor"], &rows)
}

fn report_rows(reports: &[MetricsReport], label: &str) -> Vec<Vec<String>> {
    reports
        .iter()
        .map(|r| {
            vec![
                label.to_string(),
                r.method.clone(),
                r.completed.to_string(),
                r.failures.to_string(),
                r.selection_hits.map(|h| h.to_string()).unwrap_or_default(),
                num(r.avg_model_size),
                opt_num(r.sse.map(|s| 100.0 * s)),
                opt_num(r.true_model_probability),
                opt_num(r.auc),
                opt_num(r.calib_slope),
                opt_num(r.log_score),
                opt_num(r.brier),
            ]
        })
        .collect()
}

const REPORT_HEADER: [&str; 12] = [
    "scenario",
    "method",
    "completed",
    "failures",
    "selection_hits",
    "avg_model_size",
    "sse_x100",
    "true_model_probability",
    "auc",
    "calibration_slope",
    "log_score",
    "brier",
];

pub fn simulate(mut cfg: ConfigMap) -> CliResult<()> {
    let started = Instant::now();
    let family = cfg.family()?;
    let kind = cfg.scenario_kind()?;
    let p = cfg.parse::<usize>("p")?.unwrap_or(20);
    let n = cfg.parse::<usize>("n")?.unwrap_or(500);
    let corr = cfg.parse::<f64>("corr")?.unwrap_or(0.0);
    let replicates = cfg.parse::<usize>("replicates")?.unwrap_or(20);
    let seed = cfg.seed()?;
    let methods = cfg.methods("hyper_g; robust; fixed_g:g=n; bic")?;
    let model_prior = cfg.model_prior()?;
    let strategy = cfg.strategy()?;
    record_defaults(
        &mut cfg,
        &[
            ("scenario", kind.to_string()),
            ("p", p.to_string()),
            ("n", n.to_string()),
            ("corr", num(corr)),
            ("replicates", replicates.to_string()),
            ("seed", seed.to_string()),
        ],
    )?;
    let scenario = Scenario::new(kind, p, n, corr, family, seed)?;
    let out = cfg.out_dir();
    ensure_dir(&out)?;
    let reports = run_selection_experiment(&scenario, &methods, &model_prior, replicates, strategy)?;
    write_csv(&out.join("simulation.csv"), &REPORT_HEADER, &report_rows(&reports, &kind.to_string()))?;
    write_json(
        &out.join("run.json"),
        &json!({
            "command": "simulate",
            "version": VERSION,
            "config": cfg.values,
            "reports": reports,
            "timing_seconds": started.elapsed().as_secs_f64(),
        }),
    )
}

pub fn bench_bootstrap(mut cfg: ConfigMap) -> CliResult<()> {
    let started = Instant::now();
    let family = cfg.family()?;
    let methods = cfg.methods("uniform; hyper_g; local_eb; robust; aic; bic")?;
    let model_prior = cfg.model_prior()?;
    let strategy = cfg.strategy()?;
    let seed = cfg.seed()?;
    let bootstraps = cfg.parse::<usize>("bootstraps")?.unwrap_or(100);
    let data = load_data(&cfg, &family)?;
    record_defaults(&mut cfg, &[("bootstraps", bootstraps.to_string()), ("seed", seed.to_string())])?;
    let out = cfg.out_dir();
    ensure_dir(&out)?;
    let reports = bootstrap_cv(&data, &family, &methods, &model_prior, bootstraps, seed, strategy)?;
    write_csv(&out.join("bootstrap.csv"), &REPORT_HEADER, &report_rows(&reports, "data"))?;
    write_json(
        &out.join("run.json"),
        &json!({
            "command": "bench-bootstrap",
            "version": VERSION,
            "config": cfg.values,
            "reports": reports,
            "timing_seconds": started.elapsed().as_secs_f64(),
        }),
    )
}

pub fn oracle_check(out_dir: Option<&Path>) -> CliResult<()> {
    let results = self_check();
    for r in &results {
        println!("{} {}: {}", if r.passed { "ok  " } else { "FAIL" }, r.name, r.detail);
    }
    if let Some(dir) = out_dir {
        ensure_dir(dir)?;
        write_json(&dir.join("oracle_check.json"), &results)?;
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(CliError::Checks(format!("{failed} oracle checks failed")));
    }
    Ok(())
}
