use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chic-glm"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn lcg(state: &mut u64) -> f64 {
    *state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    ((*state >> 11) as f64) / ((1u64 << 53) as f64)
}

/// Logistic toy data: y depends on x1 only, x2 and x3 are noise.
fn toy_csv(dir: &Path) -> PathBuf {
    let mut s = 7u64;
    let mut text = String::from("x1,x2,x3,y\n");
    for _ in 0..80 {
        let x: Vec<f64> = (0..3).map(|_| 2.0 * lcg(&mut s) - 1.0).collect();
        let eta = -0.3 + 2.0 * x[0];
        let y = u8::from(lcg(&mut s) < 1.0 / (1.0 + (-eta).exp()));
        text.push_str(&format!("{},{},{},{}\n", x[0], x[1], x[2], y));
    }
    let path = dir.join("toy.csv");
    fs::write(&path, text).unwrap();
    path
}

fn select(data: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["select", "--data", data.to_str().unwrap(), "--out-dir", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let idx = rdr.headers().unwrap().iter().position(|h| h == name).unwrap();
    rdr.records().map(|r| r.unwrap()[idx].parse().unwrap()).collect()
}

#[test]
fn select_enumerates_all_models_of_toy_problem() {
    let dir = TempDir::new().unwrap();
    let data = toy_csv(dir.path());
    let out = dir.path().join("run");
    let o = select(&data, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let probs = column(&out.join("models.csv"), "posterior_probability");
    assert_eq!(probs.len(), 8);
    let total: f64 = probs.iter().sum();
    assert!((total - 1.0).abs() < 1e-12, "total {total}");
    assert!(probs.windows(2).all(|w| w[0] >= w[1]));
    let pips = column(&out.join("pips.csv"), "inclusion_probability");
    assert_eq!(pips.len(), 3);
    assert!(pips[0] > 0.9, "x1 pip {}", pips[0]);
    for name in ["bma_coefficients.csv", "fitted.csv", "predictor.json", "run.json"] {
        assert!(out.join(name).exists(), "{name} missing");
    }
}

#[test]
fn select_output_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let data = toy_csv(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = select(&data, out, &["--prior", "hyper_g", "--prior-arg", "a=3"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for name in ["models.csv", "pips.csv", "bma_coefficients.csv", "fitted.csv", "predictor.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name} differs");
    }
}

#[test]
fn mcmc_search_is_reproducible_from_seed() {
    let dir = TempDir::new().unwrap();
    let data = toy_csv(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let flags = ["--search", "mcmc", "--iterations", "2000", "--seed", "11"];
    for out in [&a, &b] {
        let o = select(&data, out, &flags);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(fs::read(a.join("models.csv")).unwrap(), fs::read(b.join("models.csv")).unwrap());
}

#[test]
fn run_json_replays_to_identical_results() {
    let dir = TempDir::new().unwrap();
    let data = toy_csv(dir.path());
    let first = dir.path().join("first");
    let o = select(&data, &first, &["--prior", "intrinsic"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let second = dir.path().join("second");
    let o = run(&[
        "select",
        "--config",
        first.join("run.json").to_str().unwrap(),
        "--out-dir",
        second.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(first.join("models.csv")).unwrap(), fs::read(second.join("models.csv")).unwrap());
}

#[test]
fn predict_on_training_data_matches_fitted_values() {
    let dir = TempDir::new().unwrap();
    let data = toy_csv(dir.path());
    let out = dir.path().join("run");
    assert!(select(&data, &out, &[]).status.success());
    let o = run(&["predict", "--run-dir", out.to_str().unwrap(), "--data", data.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let fitted = fs::read_to_string(out.join("fitted.csv")).unwrap();
    let preds = fs::read_to_string(out.join("predictions.csv")).unwrap();
    assert_eq!(fitted, preds);
}

#[test]
fn predict_ignores_column_order_and_extra_columns() {
    let dir = TempDir::new().unwrap();
    let data = toy_csv(dir.path());
    let out = dir.path().join("run");
    assert!(select(&data, &out, &[]).status.success());
    let text = fs::read_to_string(&data).unwrap();
    let mut permuted = String::from("extra,x3,x1,x2\n");
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        permuted.push_str(&format!("9,{},{},{}\n", f[2], f[0], f[1]));
    }
    let new = dir.path().join("permuted.csv");
    fs::write(&new, permuted).unwrap();
    let target = dir.path().join("p.csv");
    let o = run(&[
        "predict",
        "--run-dir",
        out.to_str().unwrap(),
        "--data",
        new.to_str().unwrap(),
        "--out",
        target.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(target).unwrap(), fs::read_to_string(out.join("fitted.csv")).unwrap());
}

#[test]
fn predict_on_empty_data_writes_header_only() {
    let dir = TempDir::new().unwrap();
    let data = toy_csv(dir.path());
    let out = dir.path().join("run");
    assert!(select(&data, &out, &[]).status.success());
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "x1,x2,x3\n").unwrap();
    let o = run(&["predict", "--run-dir", out.to_str().unwrap(), "--data", empty.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("predictions.csv")).unwrap();
    assert_eq!(text.trim_end(), "row,mean,linear_predictor");
}

#[test]
fn predict_reports_missing_columns() {
    let dir = TempDir::new().unwrap();
    let data = toy_csv(dir.path());
    let out = dir.path().join("run");
    assert!(select(&data, &out, &[]).status.success());
    let partial = dir.path().join("partial.csv");
    fs::write(&partial, "x1,x3\n0.1,0.2\n").unwrap();
    let o = run(&["predict", "--run-dir", out.to_str().unwrap(), "--data", partial.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("x2"), "{}", stderr(&o));
}

#[test]
fn malformed_row_reports_line_number() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "x1,y\n0.5,1\nabc,0\n0.1,1\n").unwrap();
    let o = select(&bad, &dir.path().join("run"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn binomial_rejects_non_binary_response() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("counts.csv");
    fs::write(&bad, "x1,y\n0.5,1\n0.2,3\n0.1,0\n0.7,1\n").unwrap();
    let o = select(&bad, &dir.path().join("run"), &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn missing_data_file_is_io_error() {
    let dir = TempDir::new().unwrap();
    let o = select(&dir.path().join("nope.csv"), &dir.path().join("run"), &[]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = TempDir::new().unwrap();
    let data = toy_csv(dir.path());
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, format!("data = {}\nprior = robust\nbogus_key = 1\n", data.display())).unwrap();
    let o = run(&["select", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bogus_key"), "{}", stderr(&o));
}

#[test]
fn config_file_and_flags_agree() {
    let dir = TempDir::new().unwrap();
    let data = toy_csv(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        format!("# comment\ndata = {}\nprior = fixed_g\nprior.g = 20\nout_dir = {}\n", data.display(), a.display()),
    )
    .unwrap();
    let o = run(&["select", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = select(&data, &b, &["--prior", "fixed_g", "--prior-arg", "g=20"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(a.join("models.csv")).unwrap(), fs::read(b.join("models.csv")).unwrap());
}

#[test]
fn resolved_prior_is_logged() {
    let dir = TempDir::new().unwrap();
    let data = toy_csv(dir.path());
    let out = dir.path().join("run");
    let o = bin()
        .env("CHIC_GLM_LOG", "info")
        .args(["select", "--data", data.to_str().unwrap(), "--out-dir", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(stderr(&o).contains("tCCH("), "{}", stderr(&o));
}

#[test]
fn simulate_writes_one_row_per_method() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("sim");
    let o = run(&[
        "simulate",
        "--scenario",
        "null",
        "--p",
        "4",
        "--n",
        "60",
        "--replicates",
        "2",
        "--method",
        "robust",
        "--method",
        "bic",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let completed = column(&out.join("simulation.csv"), "completed");
    assert_eq!(completed, vec![2.0, 2.0]);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(json["config"]["scenario"], "null");
}

#[test]
fn bench_bootstrap_reports_each_method() {
    let dir = TempDir::new().unwrap();
    let data = toy_csv(dir.path());
    let out = dir.path().join("boot");
    let o = run(&[
        "bench-bootstrap",
        "--data",
        data.to_str().unwrap(),
        "--bootstraps",
        "3",
        "--method",
        "robust",
        "--method",
        "aic",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let auc = column(&out.join("bootstrap.csv"), "auc");
    assert_eq!(auc.len(), 2);
    assert!(auc.iter().all(|a| (0.5..=1.0).contains(a)), "{auc:?}");
}

#[test]
fn oracle_check_passes() {
    let dir = TempDir::new().unwrap();
    let o = run(&["oracle-check", "--out-dir", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("oracle_check.json").exists());
}
