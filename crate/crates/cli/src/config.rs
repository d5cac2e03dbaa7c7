//! Flat `key = value` run configuration merged from a file and flags.
//!
//! Files hold one assignment per line; `#` and `;` start comments. A
//! `run.json` written by an earlier run is also accepted, in which case its
//! recorded configuration is replayed. Unknown keys are errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chic_core::priors::HyperRule;
use chic_core::search::ModelPrior;
use chic_core::sim::{Method, ScenarioKind, SearchStrategy};
use chic_core::{Family, FamilyKind};

use crate::error::{CliError, CliResult};

pub const DEFAULT_ITERATIONS: usize = 1 << 17;
pub const DEFAULT_SEED: u64 = 1;

const DATA_KEYS: &[&str] = &["data", "response", "weights", "offset", "predictors"];
const MODEL_KEYS: &[&str] = &["family", "link", "dispersion", "overdispersed"];
const SEARCH_KEYS: &[&str] = &["model_prior", "model_prior.a", "model_prior.b", "search", "iterations", "seed", "out_dir"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Select,
    Simulate,
    BenchBootstrap,
}

impl Command {
    fn allows(self, key: &str) -> bool {
        let common = MODEL_KEYS.contains(&key) || SEARCH_KEYS.contains(&key);
        match self {
            Command::Select => {
                common || DATA_KEYS.contains(&key) || key == "prior" || key.starts_with("prior.") || key == "exclude_null"
            }
            Command::Simulate => {
                common || ["scenario", "p", "n", "corr", "methods", "replicates"].contains(&key)
            }
            Command::BenchBootstrap => common || DATA_KEYS.contains(&key) || ["methods", "bootstraps"].contains(&key),
        }
    }
}

/// Ordered configuration map; later sources override earlier ones.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigMap {
    command: Option<Command>,
    pub values: BTreeMap<String, String>,
}

impl ConfigMap {
    pub fn new(command: Command) -> Self {
        ConfigMap {
            command: Some(command),
            values: BTreeMap::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> CliResult<()> {
        let key = key.trim().to_ascii_lowercase().replace('-', "_");
        if let Some(cmd) = self.command {
            if !cmd.allows(&key) {
                return Err(CliError::Config(format!("unknown configuration key '{key}'")));
            }
        }
        self.values.insert(key, value.into().trim().to_string());
        Ok(())
    }

    pub fn set_opt<T: ToString>(&mut self, key: &str, value: Option<T>) -> CliResult<()> {
        match value {
            Some(v) => self.set(key, v.to_string()),
            None => Ok(()),
        }
    }

    pub fn load_file(&mut self, path: &Path) -> CliResult<()> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            let run: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let cfg = run
                .get("config")
                .and_then(|c| c.as_object())
                .ok_or_else(|| CliError::Config(format!("{} has no 'config' object", path.display())))?;
            for (k, v) in cfg {
                let v = v
                    .as_str()
                    .ok_or_else(|| CliError::Config(format!("config value for '{k}' must be a string")))?;
                self.set(k, v)?;
            }
            return Ok(());
        }
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("{}: line {}: expected key = value", path.display(), idx + 1))
            })?;
            self.set(k, v).map_err(|e| CliError::Config(format!("{}: line {}: {e}", path.display(), idx + 1)))?;
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> CliResult<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| CliError::Config(format!("invalid value '{v}' for '{key}': {e}")))
            })
            .transpose()
    }

    pub fn flag(&self, key: &str) -> CliResult<bool> {
        match self.get(key) {
            None => Ok(false),
            Some(v) => match v.to_ascii_lowercase().as_str() {
                "1" | "true" | "yes" | "on" => Ok(true),
                "0" | "false" | "no" | "off" => Ok(false),
                _ => Err(CliError::Config(format!("invalid boolean '{v}' for '{key}'"))),
            },
        }
    }

    pub fn required(&self, key: &str) -> CliResult<&str> {
        self.get(key)
            .ok_or_else(|| CliError::Config(format!("missing required setting '{key}'")))
    }

    pub fn family(&self) -> CliResult<Family> {
        let full = self.get("family").unwrap_or("binomial").to_ascii_lowercase();
        let (name, suffix) = match full.split_once('-') {
            Some((f, l)) => (f.to_string(), Some(l.to_string())),
            None => (full, None),
        };
        let link = self.get("link").map(str::to_ascii_lowercase).or(suffix);
        let kind = match (name.as_str(), link.as_deref()) {
            ("binomial" | "logistic", None | Some("logit")) => FamilyKind::BinomialLogit,
            ("binomial" | "probit", Some("probit")) | ("probit", None) => FamilyKind::BinomialProbit,
            ("poisson", None | Some("log")) => FamilyKind::PoissonLog,
            ("gaussian" | "normal", None | Some("identity")) => FamilyKind::GaussianIdentity,
            (f, l) => {
                return Err(CliError::Config(format!(
                    "unsupported family/link combination {f}/{}",
                    l.unwrap_or("default")
                )))
            }
        };
        let dispersion = self.parse::<f64>("dispersion")?;
        Ok(Family::new(kind, dispersion, self.flag("overdispersed")?)?)
    }

    pub fn prior(&self) -> CliResult<HyperRule> {
        let name = self.get("prior").unwrap_or("robust");
        let args: BTreeMap<String, String> = self
            .values
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("prior.").map(|a| (a.to_string(), v.clone())))
            .collect();
        Ok(HyperRule::from_name(name, &args)?)
    }

    pub fn model_prior(&self) -> CliResult<ModelPrior> {
        let name = self.get("model_prior").unwrap_or("uniform");
        Ok(ModelPrior::parse(
            name,
            self.parse::<f64>("model_prior.a")?,
            self.parse::<f64>("model_prior.b")?,
        )?)
    }

    pub fn seed(&self) -> CliResult<u64> {
        Ok(self.parse::<u64>("seed")?.unwrap_or(DEFAULT_SEED))
    }

    pub fn strategy(&self) -> CliResult<SearchStrategy> {
        let iterations = self.parse::<usize>("iterations")?.unwrap_or(DEFAULT_ITERATIONS);
        match self.get("search").unwrap_or("auto").to_ascii_lowercase().as_str() {
            "auto" => Ok(SearchStrategy::Auto { iterations }),
            "enumerate" | "enumeration" => Ok(SearchStrategy::Enumerate),
            "mcmc" => Ok(SearchStrategy::Mcmc { iterations }),
            other => Err(CliError::Config(format!("unknown search '{other}'"))),
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.get("out_dir").unwrap_or("."))
    }

    /// Methods separated by `;`, each `name` or `name:key=value,key=value`.
    pub fn methods(&self, default: &str) -> CliResult<Vec<Method>> {
        let text = self.get("methods").unwrap_or(default);
        text.split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(parse_method)
            .collect()
    }

    pub fn scenario_kind(&self) -> CliResult<ScenarioKind> {
        Ok(ScenarioKind::parse(self.get("scenario").unwrap_or("sparse"))?)
    }
}

pub fn parse_method(text: &str) -> CliResult<Method> {
    let (name, rest) = text.split_once(':').unwrap_or((text, ""));
    let mut args = BTreeMap::new();
    for kv in rest.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("method argument '{kv}' must be key=value")))?;
        args.insert(k.trim().to_string(), v.trim().to_string());
    }
    let rule = HyperRule::from_name(name.trim(), &args)?;
    Ok(Method {
        name: text.trim().to_string(),
        rule,
    })
}

/// Split `key=value` from a repeated flag.
pub fn split_assignment(text: &str) -> CliResult<(String, String)> {
    text.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| CliError::Config(format!("expected key=value, got '{text}'")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let mut m = ConfigMap::new(Command::Select);
        assert!(m.set("prior", "robust").is_ok());
        assert!(m.set("prior.a", "3").is_ok());
        assert!(m.set("replicates", "3").is_err());
        assert!(m.set("colour", "red").is_err());
    }

    #[test]
    fn family_and_link_resolve() {
        let mut m = ConfigMap::new(Command::Select);
        m.set("family", "binomial").unwrap();
        m.set("link", "probit").unwrap();
        assert_eq!(m.family().unwrap().kind, FamilyKind::BinomialProbit);
        m.set("link", "log").unwrap();
        assert!(m.family().is_err());
    }

    #[test]
    fn methods_parse_with_arguments() {
        let mut m = ConfigMap::new(Command::Simulate);
        m.set("methods", "hyper_g:a=4; fixed_g:g=n ;bic").unwrap();
        let ms = m.methods("").unwrap();
        assert_eq!(ms.len(), 3);
        assert_eq!(ms[0].rule, HyperRule::HyperG { a_h: 4.0 });
    }
}
