//! Command-line workflows for Bayesian variable selection in GLMs: model
//! selection and averaging on CSV data, prediction from saved runs,
//! simulation studies and bootstrap cross-validation.

pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::{split_assignment, Command, ConfigMap};
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "chic-glm", version, about = "Bayesian variable selection for GLMs")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Commands,
}

#[derive(Debug, Subcommand)]
pub enum Commands {
    /// Posterior over models, inclusion probabilities and BMA coefficients.
    Select(SelectArgs),
    /// Model-averaged predictions from a saved selection run.
    Predict(PredictArgs),
    /// Selection experiment on simulated data.
    Simulate(SimulateArgs),
    /// Bootstrap cross-validation of model-averaged predictions.
    BenchBootstrap(BootstrapArgs),
    /// Compare analytic results against the reference implementations.
    OracleCheck(OracleArgs),
}

#[derive(Debug, Args, Default)]
pub struct DataFlags {
    /// Input CSV with a header row.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Response column (default `y`).
    #[arg(long)]
    pub response: Option<String>,
    /// Binomial trials or prior weights column.
    #[arg(long)]
    pub weights: Option<String>,
    /// Offset column added to the linear predictor.
    #[arg(long)]
    pub offset: Option<String>,
    /// Comma-separated predictor columns (default: all others).
    #[arg(long)]
    pub predictors: Option<String>,
}

#[derive(Debug, Args, Default)]
pub struct ModelFlags {
    /// binomial, poisson or gaussian.
    #[arg(long)]
    pub family: Option<String>,
    /// logit, probit, log or identity.
    #[arg(long)]
    pub link: Option<String>,
    /// Known dispersion; Gaussian data without it has unknown variance.
    #[arg(long)]
    pub dispersion: Option<f64>,
    /// Integrate over an unknown dispersion for binomial or Poisson data.
    #[arg(long)]
    pub overdispersed: bool,
}

#[derive(Debug, Args, Default)]
pub struct SearchFlags {
    /// uniform or beta-binomial.
    #[arg(long)]
    pub model_prior: Option<String>,
    /// Beta-binomial `a` (default 1).
    #[arg(long)]
    pub model_prior_a: Option<f64>,
    /// Beta-binomial `b` (default 1).
    #[arg(long)]
    pub model_prior_b: Option<f64>,
    /// auto, enumerate or mcmc.
    #[arg(long)]
    pub search: Option<String>,
    /// MCMC iterations (default 131072).
    #[arg(long)]
    pub iterations: Option<usize>,
    /// RNG seed (default 1).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (default `.`).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// `key = value` file or a previous `run.json`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataFlags,
    #[command(flatten)]
    pub model: ModelFlags,
    #[command(flatten)]
    pub search: SearchFlags,
    /// Hyper-prior or evidence rule, e.g. robust, hyper_g, fixed_g, bic.
    #[arg(long)]
    pub prior: Option<String>,
    /// Hyperparameter `key=value`; repeatable.
    #[arg(long = "prior-arg")]
    pub prior_args: Vec<String>,
    /// Leave the null model out of the model space.
    #[arg(long)]
    pub exclude_null: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Directory holding `predictor.json` from `select`.
    #[arg(long)]
    pub run_dir: PathBuf,
    /// CSV with the predictor columns used by `select`.
    #[arg(long)]
    pub data: PathBuf,
    /// Output path (default: `<run-dir>/predictions.csv`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// `key = value` file or a previous `run.json`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelFlags,
    #[command(flatten)]
    pub search: SearchFlags,
    /// null, sparse, medium or full.
    #[arg(long)]
    pub scenario: Option<String>,
    /// Number of predictors (default 20).
    #[arg(long)]
    pub p: Option<usize>,
    /// Sample size (default 500).
    #[arg(long)]
    pub n: Option<usize>,
    /// Correlation `r` between neighbouring predictors.
    #[arg(long)]
    pub corr: Option<f64>,
    /// Method `name[:key=value,...]`; repeatable.
    #[arg(long = "method")]
    pub methods: Vec<String>,
    /// Simulated data sets per method (default 20).
    #[arg(long)]
    pub replicates: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BootstrapArgs {
    /// `key = value` file or a previous `run.json`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataFlags,
    #[command(flatten)]
    pub model: ModelFlags,
    #[command(flatten)]
    pub search: SearchFlags,
    /// Method `name[:key=value,...]`; repeatable.
    #[arg(long = "method")]
    pub methods: Vec<String>,
    /// Bootstrap resamples (default 100).
    #[arg(long)]
    pub bootstraps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Output directory (default `.`).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

fn path_str(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

fn apply_data(cfg: &mut ConfigMap, f: &DataFlags) -> CliResult<()> {
    cfg.set_opt("data", path_str(&f.data))?;
    cfg.set_opt("response", f.response.as_ref())?;
    cfg.set_opt("weights", f.weights.as_ref())?;
    cfg.set_opt("offset", f.offset.as_ref())?;
    cfg.set_opt("predictors", f.predictors.as_ref())
}

fn apply_model(cfg: &mut ConfigMap, f: &ModelFlags) -> CliResult<()> {
    cfg.set_opt("family", f.family.as_ref())?;
    cfg.set_opt("link", f.link.as_ref())?;
    cfg.set_opt("dispersion", f.dispersion.map(output::num))?;
    if f.overdispersed {
        cfg.set("overdispersed", "true")?;
    }
    Ok(())
}

fn apply_search(cfg: &mut ConfigMap, f: &SearchFlags) -> CliResult<()> {
    cfg.set_opt("model_prior", f.model_prior.as_ref())?;
    cfg.set_opt("model_prior.a", f.model_prior_a.map(output::num))?;
    cfg.set_opt("model_prior.b", f.model_prior_b.map(output::num))?;
    cfg.set_opt("search", f.search.as_ref())?;
    cfg.set_opt("iterations", f.iterations)?;
    cfg.set_opt("seed", f.seed)?;
    cfg.set_opt("out_dir", path_str(&f.out_dir))
}

fn base(command: Command, file: &Option<PathBuf>) -> CliResult<ConfigMap> {
    let mut cfg = ConfigMap::new(command);
    if let Some(path) = file {
        cfg.load_file(path)?;
    }
    Ok(cfg)
}

pub fn run(cli: Cli) -> CliResult<()> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Config(format!("could not size the thread pool: {e}")))?;
    }
    match cli.command {
        Commands::Select(a) => {
            let mut cfg = base(Command::Select, &a.config)?;
            apply_data(&mut cfg, &a.data)?;
            apply_model(&mut cfg, &a.model)?;
            apply_search(&mut cfg, &a.search)?;
            cfg.set_opt("prior", a.prior.as_ref())?;
            for kv in &a.prior_args {
                let (k, v) = split_assignment(kv)?;
                cfg.set(&format!("prior.{k}"), v)?;
            }
            if a.exclude_null {
                cfg.set("exclude_null", "true")?;
            }
            commands::select(cfg)
        }
        Commands::Predict(a) => commands::predict(&a.run_dir, &a.data, a.out.as_deref()),
        Commands::Simulate(a) => {
            let mut cfg = base(Command::Simulate, &a.config)?;
            apply_model(&mut cfg, &a.model)?;
            apply_search(&mut cfg, &a.search)?;
            cfg.set_opt("scenario", a.scenario.as_ref())?;
            cfg.set_opt("p", a.p)?;
            cfg.set_opt("n", a.n)?;
            cfg.set_opt("corr", a.corr.map(output::num))?;
            cfg.set_opt("replicates", a.replicates)?;
            if !a.methods.is_empty() {
                cfg.set("methods", a.methods.join(";"))?;
            }
            commands::simulate(cfg)
        }
        Commands::BenchBootstrap(a) => {
            let mut cfg = base(Command::BenchBootstrap, &a.config)?;
            apply_data(&mut cfg, &a.data)?;
            apply_model(&mut cfg, &a.model)?;
            apply_search(&mut cfg, &a.search)?;
            cfg.set_opt("bootstraps", a.bootstraps)?;
            if !a.methods.is_empty() {
                cfg.set("methods", a.methods.join(";"))?;
            }
            commands::bench_bootstrap(cfg)
        }
        Commands::OracleCheck(a) => commands::oracle_check(a.out_dir.as_deref()),
    }
}
