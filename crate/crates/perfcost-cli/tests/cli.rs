//! End-to-end checks of the `perfcost` binary: exit codes, artifact layout,
//! determinism of metrics files, and the report path.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_perfcost"))
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

fn map_eval_config(out: &Path) -> String {
    format!(
        r#"{{
  "kind": "fit-map-eval",
  "out_dir": "{}",
  "seeds": [0, 1],
  "world": {{
    "potential": {{"family": "quadratic", "chol": [[0.31622776601683794]]}},
    "benefit": {{"variant": "power", "theta": [0.1], "exponent": "1/2"}},
    "ex_ante": {{"lognormal1d": {{"mu": -0.5, "sigma": 0.5}}}}
  }},
  "data": {{"n": 40, "sizes": [10, 25, 40]}},
  "eval": {{"n_eval": 200, "grid_points": 24}}
}}"#,
        out.display()
    )
}

#[test]
fn fit_map_eval_runs_and_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    let out1 = dir.path().join("out1");
    let out2 = dir.path().join("out2");
    write(&cfg_path, &map_eval_config(&out1));

    let status = bin()
        .args(["fit-map-eval", "--config"])
        .arg(&cfg_path)
        .status()
        .unwrap();
    assert!(status.success(), "first run failed");
    let status = bin()
        .args(["fit-map-eval", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(&out2)
        .status()
        .unwrap();
    assert!(status.success(), "second run failed");

    for name in ["fit_map_eval.csv", "fit_map_eval_summary.json", "fit_map_eval_error.svg", "phi_prime_overlay.svg"] {
        let a = std::fs::read(out1.join(name)).unwrap_or_else(|_| panic!("missing {name}"));
        let b = std::fs::read(out2.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    // CSV carries all three benefit variants
    let text = std::fs::read_to_string(out1.join("fit_map_eval.csv")).unwrap();
    for v in ["correct", "log", "cbrt"] {
        assert!(text.contains(v), "missing variant {v}");
    }
}

#[test]
fn seed_offset_changes_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    let out1 = dir.path().join("a");
    let out2 = dir.path().join("b");
    write(&cfg_path, &map_eval_config(&out1));
    assert!(bin().args(["fit-map-eval", "--config"]).arg(&cfg_path).status().unwrap().success());
    assert!(bin()
        .args(["fit-map-eval", "--config"])
        .arg(&cfg_path)
        .args(["--seed-offset", "7"])
        .arg("--out")
        .arg(&out2)
        .status()
        .unwrap()
        .success());
    let a = std::fs::read(out1.join("fit_map_eval.csv")).unwrap();
    let b = std::fs::read(out2.join("fit_map_eval.csv")).unwrap();
    assert_ne!(a, b, "seed offset must change the sampled data");
}

#[test]
fn invalid_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    write(&cfg_path, "{\"kind\": \"fit-map-eval\"}");
    let status = bin().args(["fit-map-eval", "--config"]).arg(&cfg_path).status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn kind_mismatch_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    write(&cfg_path, &map_eval_config(&dir.path().join("out")));
    let status = bin().args(["benchmark", "--config"]).arg(&cfg_path).status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn ols_oracle_writes_closed_forms() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    let out = dir.path().join("out");
    write(
        &cfg_path,
        &format!(
            r#"{{
  "kind": "ols-oracle",
  "out_dir": "{}",
  "seeds": [0],
  "world": {{
    "potential": {{"family": "quadratic", "chol": [[1.0, 0.0], [0.0, 1.0]]}},
    "ex_ante": {{"gaussian": {{"mean": [0.0, 0.0], "cov": [[1.0, 0.0], [0.0, 1.0]]}}}}
  }},
  "data": {{"n": 10}},
  "ols": {{"theta_star": [1.0, 0.0], "sigma": 1.0}}
}}"#,
            out.display()
        ),
    );
    let status = bin().args(["ols-oracle", "--config"]).arg(&cfg_path).status().unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(out.join("ols_oracle.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let c = v["c"].as_f64().unwrap();
    // 2 c^3 + c - 1 = 0 for ||theta*||^2 = 1
    assert!((2.0 * c.powi(3) + c - 1.0).abs() <= 1e-12);
    assert!(v["regret"].as_f64().unwrap() >= 0.0);
    assert!(v["pr_at_c_theta_star"].as_f64().unwrap() >= v["pr_min_est"].as_f64().unwrap());
}

#[test]
fn benchmark_schema_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    let out = dir.path().join("out");
    write(
        &cfg_path,
        &format!(
            r#"{{
  "kind": "benchmark",
  "out_dir": "{}",
  "seeds": [0, 1],
  "world": {{
    "potential": {{"family": "quadratic", "chol": [[0.31622776601683794, 0.0], [0.0, 0.31622776601683794]]}},
    "label_model": {{"alpha": 0.3, "beta": [-1.0, -0.7]}},
    "ex_ante": {{"gaussian": {{"mean": [0.0, 0.0], "cov": [[1.0, 0.0], [0.0, 1.0]]}}}}
  }},
  "data": {{"n": 40, "k": 3, "k_grid": [1, 3]}},
  "solver": {{"plugin_iters": 400, "max_outer_iters": 8, "rgd_etas": [0.2], "rgd_samples_per_round": 40}},
  "eval": {{"n_eval": 400}}
}}"#,
            out.display()
        ),
    );
    let status = bin().args(["benchmark", "--config"]).arg(&cfg_path).status().unwrap();
    assert!(status.success(), "benchmark run failed");

    let text = std::fs::read_to_string(out.join("benchmark.csv")).unwrap();
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(
        reader.headers().unwrap(),
        &csv::StringRecord::from(vec![
            "method",
            "K",
            "n",
            "seed",
            "accuracy",
            "cross_entropy",
            "M_error_fro"
        ])
    );
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    // one row per (method, K, seed): 5 methods x 2 K values x 2 seeds
    assert_eq!(rows.len(), 5 * 2 * 2);
    assert!(rows.iter().any(|r| &r[0] == "perfgd"), "perfgd placeholder rows missing");
    for r in rows.iter().filter(|r| &r[0] == "perfgd") {
        assert_eq!(&r[4], "", "perfgd metrics must stay empty");
    }
    assert!(out.join("benchmark_cross_entropy.svg").exists());
    assert!(out.join("benchmark_summary.json").exists());

    // report over the results
    let status = bin().args(["report", "--in"]).arg(&out).status().unwrap();
    assert!(status.success());
    let summary = std::fs::read_to_string(out.join("summary.md")).unwrap();
    assert!(summary.contains("| method | 1 | 3 |"));
    assert!(summary.contains("| plugin |"));
}

#[test]
fn report_on_empty_dir_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin().args(["report", "--in"]).arg(dir.path()).status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn fit_cost_from_csv_pool() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("credit.csv");
    perfcost_cli::synth::write_credit_csv(&csv_path, 300, 5).unwrap();
    let cfg_path = dir.path().join("cfg.json");
    let out = dir.path().join("out");
    let schema = serde_json::json!({
        "feature_columns": [
            "RevolvingUtilizationOfUnsecuredLines",
            "DebtRatio",
            "MonthlyIncome"
        ],
        "label_column": "SeriousDlqin2yrs",
        "intercept": false
    });
    write(
        &cfg_path,
        &format!(
            r#"{{
  "kind": "fit-cost",
  "out_dir": "{}",
  "seeds": [0],
  "world": {{
    "potential": {{"family": "quadratic", "chol": [[0.31622776601683794, 0.0, 0.0], [0.0, 0.31622776601683794, 0.0], [0.0, 0.0, 0.31622776601683794]]}},
    "label_model": {{"alpha": 0.2, "beta": [-0.9, -0.5, -0.7]}},
    "ex_ante": {{"csv": {{"path": "{}", "schema": {}}}}}
  }},
  "data": {{"n": 60, "k": 3}},
  "solver": {{"plugin_iters": 300, "max_outer_iters": 6}}
}}"#,
            out.display(),
            csv_path.display(),
            schema
        ),
    );
    let status = bin().args(["fit-cost", "--config"]).arg(&cfg_path).status().unwrap();
    assert!(status.success(), "fit-cost run failed");
    assert!(out.join("potential_seed0.json").exists());
    let text = std::fs::read_to_string(out.join("fit_cost.csv")).unwrap();
    assert!(text.starts_with("seed,family,converged,iterations,final_objective,m_error_fro"));
    assert!(out.join("fit_cost_trace.svg").exists());
    // the written potential parses back into the library type
    let pot_text = std::fs::read_to_string(out.join("potential_seed0.json")).unwrap();
    let parsed: perfcost::potentials::PotentialModel = serde_json::from_str(&pot_text).unwrap();
    assert_eq!(parsed.dim(), 3);
}

#[test]
fn convergence_study_writes_bound_column() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    let out = dir.path().join("out");
    write(
        &cfg_path,
        &format!(
            r#"{{
  "kind": "convergence-study",
  "out_dir": "{}",
  "seeds": [0, 1, 2],
  "world": {{
    "potential": {{"family": "quadratic", "chol": [[1.4142135623730951, 0.0], [0.21213203435596426, 0.9772992818981123]]}},
    "ex_ante": {{"gaussian": {{"mean": [0.0, 0.0], "cov": [[1.0, 0.0], [0.0, 1.0]]}}}}
  }},
  "data": {{"n": 40, "sizes": [40, 80]}}
}}"#,
            out.display()
        ),
    );
    let status = bin().args(["convergence-study", "--config"]).arg(&cfg_path).status().unwrap();
    assert!(status.success(), "convergence-study failed");
    let text = std::fs::read_to_string(out.join("convergence_study.csv")).unwrap();
    assert!(text.starts_with("n,seed,sigma_err_op,bound,in_bound"));
    // 2 sizes x 3 seeds rows
    assert_eq!(text.lines().count(), 1 + 6);
    assert!(out.join("convergence_study.svg").exists());
}

#[test]
fn optimize_reports_methods() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    let out = dir.path().join("out");
    write(
        &cfg_path,
        &format!(
            r#"{{
  "kind": "optimize",
  "out_dir": "{}",
  "seeds": [0],
  "world": {{
    "potential": {{"family": "quadratic", "chol": [[0.31622776601683794, 0.0], [0.0, 0.31622776601683794]]}},
    "label_model": {{"alpha": 0.3, "beta": [-1.0, -0.7]}},
    "ex_ante": {{"gaussian": {{"mean": [0.0, 0.0], "cov": [[1.0, 0.0], [0.0, 1.0]]}}}}
  }},
  "data": {{"n": 50, "k": 4}},
  "solver": {{"plugin_iters": 400, "max_outer_iters": 8}},
  "eval": {{"n_eval": 300}}
}}"#,
            out.display()
        ),
    );
    let status = bin().args(["optimize", "--config"]).arg(&cfg_path).status().unwrap();
    assert!(status.success(), "optimize failed");
    let text = std::fs::read_to_string(out.join("optimize.csv")).unwrap();
    for m in ["plugin", "plugin_true_m", "oracle"] {
        assert!(text.contains(m), "missing method {m}");
    }
    assert!(out.join("optimize_summary.json").exists());
}
