//! Report emitter: reads harness CSV/JSON artifacts from a results directory
//! and writes a markdown summary with median and IQR tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("no recognized result files in {dir}; expected one of: {expected}")]
    NothingToReport { dir: PathBuf, expected: String },
    #[error("{path}: {message}")]
    BadFile { path: PathBuf, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const KNOWN_FILES: [&str; 6] = [
    "benchmark.csv",
    "convergence_study.csv",
    "fit_map_eval.csv",
    "fit_cost.csv",
    "optimize.csv",
    "ols_oracle.json",
];

fn quartiles(mut xs: Vec<f64>) -> (f64, f64, f64) {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |p: f64| -> f64 {
        if xs.is_empty() {
            return f64::NAN;
        }
        let idx = p * (xs.len() - 1) as f64;
        let lo = idx.floor() as usize;
        let hi = idx.ceil() as usize;
        if lo == hi {
            xs[lo]
        } else {
            xs[lo] + (idx - lo as f64) * (xs[hi] - xs[lo])
        }
    };
    (q(0.25), q(0.5), q(0.75))
}

fn fmt_cell(vals: Vec<f64>) -> String {
    if vals.is_empty() {
        return "—".into();
    }
    let (q1, q2, q3) = quartiles(vals);
    format!("{q2:.4} [{q1:.4}, {q3:.4}]")
}

type Rows = Vec<BTreeMap<String, String>>;

fn read_csv(path: &Path) -> Result<Rows, ReportError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| ReportError::BadFile { path: path.to_path_buf(), message: e.to_string() })?;
    let headers = reader
        .headers()
        .map_err(|e| ReportError::BadFile { path: path.to_path_buf(), message: e.to_string() })?
        .clone();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| ReportError::BadFile {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        rows.push(
            headers
                .iter()
                .zip(record.iter())
                .map(|(h, v)| (h.to_string(), v.to_string()))
                .collect(),
        );
    }
    Ok(rows)
}

fn parse(row: &BTreeMap<String, String>, key: &str) -> Option<f64> {
    row.get(key).and_then(|v| v.parse::<f64>().ok())
}

fn sorted_numeric(values: impl Iterator<Item = String>) -> Vec<String> {
    let mut v: Vec<String> = values.collect();
    v.sort_by(|a, b| {
        let fa = a.parse::<f64>().unwrap_or(f64::INFINITY);
        let fb = b.parse::<f64>().unwrap_or(f64::INFINITY);
        fa.partial_cmp(&fb).unwrap().then(a.cmp(b))
    });
    v.dedup();
    v
}

fn benchmark_section(rows: &Rows, out: &mut String) {
    let ks = sorted_numeric(rows.iter().filter_map(|r| r.get("K").cloned()));
    let mut methods: Vec<String> = rows.iter().filter_map(|r| r.get("method").cloned()).collect();
    methods.sort();
    methods.dedup();
    let _ = writeln!(out, "## Benchmark: performative cross-entropy, median [IQR]\n");
    let _ = writeln!(out, "| method | {} |", ks.join(" | "));
    let _ = writeln!(out, "|---|{}|", ks.iter().map(|_| "---").collect::<Vec<_>>().join("|"));
    for method in &methods {
        let cells: Vec<String> = ks
            .iter()
            .map(|k| {
                fmt_cell(
                    rows.iter()
                        .filter(|r| r.get("method") == Some(method) && r.get("K") == Some(k))
                        .filter_map(|r| parse(r, "cross_entropy"))
                        .collect(),
                )
            })
            .collect();
        let _ = writeln!(out, "| {method} | {} |", cells.join(" | "));
    }
    let _ = writeln!(out);
}

fn convergence_section(rows: &Rows, out: &mut String) {
    let ns = sorted_numeric(rows.iter().filter_map(|r| r.get("n").cloned()));
    let _ = writeln!(out, "## Convergence study: operator-norm error of the cost matrix\n");
    let _ = writeln!(out, "| n | median error [IQR] | bound held |");
    let _ = writeln!(out, "|---|---|---|");
    for n in &ns {
        let errs: Vec<f64> = rows
            .iter()
            .filter(|r| r.get("n") == Some(n))
            .filter_map(|r| parse(r, "sigma_err_op"))
            .collect();
        let held = rows
            .iter()
            .filter(|r| r.get("n") == Some(n))
            .filter(|r| r.get("in_bound").map(|v| v == "true").unwrap_or(false))
            .count();
        let total = rows.iter().filter(|r| r.get("n") == Some(n)).count();
        let _ = writeln!(out, "| {n} | {} | {held}/{total} |", fmt_cell(errs));
    }
    let _ = writeln!(out);
}

fn map_eval_section(rows: &Rows, out: &mut String) {
    let ns = sorted_numeric(rows.iter().filter_map(|r| r.get("n").cloned()));
    let mut benefits: Vec<String> =
        rows.iter().filter_map(|r| r.get("benefit").cloned()).collect();
    benefits.sort();
    benefits.dedup();
    let _ = writeln!(out, "## Response-map estimation error, median [IQR]\n");
    let _ = writeln!(out, "| benefit | {} |", ns.join(" | "));
    let _ = writeln!(out, "|---|{}|", ns.iter().map(|_| "---").collect::<Vec<_>>().join("|"));
    for b in &benefits {
        let cells: Vec<String> = ns
            .iter()
            .map(|n| {
                fmt_cell(
                    rows.iter()
                        .filter(|r| r.get("benefit") == Some(b) && r.get("n") == Some(n))
                        .filter_map(|r| parse(r, "map_error"))
                        .collect(),
                )
            })
            .collect();
        let _ = writeln!(out, "| {b} | {} |", cells.join(" | "));
    }
    let _ = writeln!(out);
}

fn fit_cost_section(rows: &Rows, out: &mut String) {
    let _ = writeln!(out, "## Cost fits\n");
    let _ = writeln!(out, "| seed | family | converged | iterations | final objective | M error (rel F) |");
    let _ = writeln!(out, "|---|---|---|---|---|---|");
    for r in rows {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} |",
            r.get("seed").cloned().unwrap_or_default(),
            r.get("family").cloned().unwrap_or_default(),
            r.get("converged").cloned().unwrap_or_default(),
            r.get("iterations").cloned().unwrap_or_default(),
            r.get("final_objective").cloned().unwrap_or_default(),
            r.get("m_error_fro").cloned().unwrap_or_default(),
        );
    }
    let _ = writeln!(out);
}

fn optimize_section(rows: &Rows, out: &mut String) {
    let mut methods: Vec<String> = rows.iter().filter_map(|r| r.get("method").cloned()).collect();
    methods.sort();
    methods.dedup();
    let _ = writeln!(out, "## Optimize: performative metrics by method, median [IQR]\n");
    let _ = writeln!(out, "| method | accuracy | cross-entropy | M error |");
    let _ = writeln!(out, "|---|---|---|---|");
    for m in &methods {
        let acc: Vec<f64> = rows
            .iter()
            .filter(|r| r.get("method") == Some(m))
            .filter_map(|r| parse(r, "accuracy"))
            .collect();
        let ce: Vec<f64> = rows
            .iter()
            .filter(|r| r.get("method") == Some(m))
            .filter_map(|r| parse(r, "cross_entropy"))
            .collect();
        let me: Vec<f64> = rows
            .iter()
            .filter(|r| r.get("method") == Some(m))
            .filter_map(|r| parse(r, "M_error_fro"))
            .collect();
        let _ = writeln!(out, "| {m} | {} | {} | {} |", fmt_cell(acc), fmt_cell(ce), fmt_cell(me));
    }
    let _ = writeln!(out);
}

/// Builds summary.md from whatever recognized artifacts the directory holds.
pub fn emit_report(dir: &Path) -> Result<PathBuf, ReportError> {
    let mut out = String::from("# Experiment summary\n\n");
    let mut found = 0;

    let p = dir.join("benchmark.csv");
    if p.exists() {
        benchmark_section(&read_csv(&p)?, &mut out);
        found += 1;
    }
    let p = dir.join("convergence_study.csv");
    if p.exists() {
        convergence_section(&read_csv(&p)?, &mut out);
        found += 1;
    }
    let p = dir.join("fit_map_eval.csv");
    if p.exists() {
        map_eval_section(&read_csv(&p)?, &mut out);
        found += 1;
    }
    let p = dir.join("fit_cost.csv");
    if p.exists() {
        fit_cost_section(&read_csv(&p)?, &mut out);
        found += 1;
    }
    let p = dir.join("optimize.csv");
    if p.exists() {
        optimize_section(&read_csv(&p)?, &mut out);
        found += 1;
    }
    let p = dir.join("ols_oracle.json");
    if p.exists() {
        let text = std::fs::read_to_string(&p)?;
        let _ = writeln!(out, "## Strategic-OLS closed forms\n\n```json\n{}\n```\n", text.trim());
        found += 1;
    }

    if found == 0 {
        return Err(ReportError::NothingToReport {
            dir: dir.to_path_buf(),
            expected: KNOWN_FILES.join(", "),
        });
    }
    let path = dir.join("summary.md");
    std::fs::write(&path, out)?;
    Ok(path)
}
