//! Experiment execution: deterministic replications fanned out over a
//! bounded worker pool, metrics collected in input order, one CSV/JSON/SVG
//! bundle per experiment kind.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use perfcost::agents::{best_response, BenefitSpec, LinearClassifier, RootExp};
use perfcost::error::Error;
use perfcost::inference::{
    estimate_response_map, estimate_sigma_from_deployments, fit_bcd, fit_convex_net,
    fit_isotonic_phi_prime_1d, BcdConfig, NetConfig, PotentialFamily,
};
use perfcost::ot::BarycenterConfig;
use perfcost::perf_risk::{
    ls_baseline, misspecified_opt_scale, ols_regret_of_misspecification, ordinary_logistic,
    plugin_logistic, rgd, strategic_ols_pr, LabeledData, OlsWorld, PluginOpt,
};
use perfcost::potentials::{IsotonicDerivative1D, PotentialModel};

use crate::config::{ExperimentConfig, ExperimentKind, FitFamily};
use crate::svg::{line_chart, Series};
use crate::world::RunWorld;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("world construction failed: {0}")]
    World(#[from] Error),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Other(String),
}

/// A replication failure: which unit failed and why. These do not abort the
/// run; partial results are preserved and the process exits with status 3.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicationError {
    pub context: String,
    pub message: String,
}

pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    pub replication_errors: Vec<ReplicationError>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.to_path_buf(), source }
}

fn median_of(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn quartiles(mut xs: Vec<f64>) -> (f64, f64, f64) {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if xs.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let q = |p: f64| -> f64 {
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

fn write_csv_rows(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf, RunError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| RunError::Other(e.to_string()))?;
    w.write_record(header).map_err(|e| RunError::Other(e.to_string()))?;
    for row in rows {
        w.write_record(row).map_err(|e| RunError::Other(e.to_string()))?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(path.to_path_buf())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<PathBuf, RunError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| RunError::Other(e.to_string()))?;
    fs::write(path, text + "\n").map_err(io_err(path))?;
    Ok(path.to_path_buf())
}

fn f(v: f64) -> String {
    format!("{v}")
}

/// Benefit gradient penalty for grid points whose response the estimated
/// potential cannot support (flat tail of an isotonic fit); scored as a
/// large fixed miss rather than dropped, so errors never shrink by failing.
const MAP_FAIL_PENALTY: f64 = 10.0;

struct KindContext<'a> {
    cfg: &'a ExperimentConfig,
    world: RunWorld,
    out: PathBuf,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome, RunError> {
    let out = cfg.out_dir.clone();
    fs::create_dir_all(&out).map_err(io_err(&out))?;
    let world = RunWorld::from_config(&cfg.world)?;
    let ctx = KindContext { cfg, world, out };
    match cfg.kind {
        ExperimentKind::FitCost => run_fit_cost(&ctx),
        ExperimentKind::FitMapEval => run_fit_map_eval(&ctx),
        ExperimentKind::ConvergenceStudy => run_convergence_study(&ctx),
        ExperimentKind::Optimize => run_optimize(&ctx),
        ExperimentKind::Benchmark => run_benchmark(&ctx),
        ExperimentKind::OlsOracle => run_ols_oracle(&ctx),
    }
}

fn bcd_config(cfg: &ExperimentConfig, seed: u64) -> BcdConfig {
    BcdConfig {
        max_outer_iters: cfg.solver.max_outer_iters,
        objective_tol: cfg.solver.objective_tol,
        barycenter: BarycenterConfig {
            max_iter: cfg.solver.bary_max_iter,
            tol: cfg.solver.bary_tol,
            ..Default::default()
        },
        net_lr: cfg.solver.net_lr,
        net_steps_per_outer: 50,
        seed,
        ..Default::default()
    }
}

fn plugin_opt(cfg: &ExperimentConfig, seed: u64) -> PluginOpt {
    PluginOpt { lr: cfg.solver.plugin_lr, iters: cfg.solver.plugin_iters, seed }
}

// --- fit-cost ---------------------------------------------------------------

fn run_fit_cost(ctx: &KindContext) -> Result<RunOutcome, RunError> {
    let cfg = ctx.cfg;
    let world = &ctx.world;
    let seeds = cfg.effective_seeds();
    struct SeedResult {
        seed: u64,
        potential: PotentialModel,
        trace: Vec<f64>,
        converged: bool,
        iterations: usize,
        m_error: Option<f64>,
    }

    let results: Vec<Result<SeedResult, ReplicationError>> = seeds
        .par_iter()
        .map(|&seed| {
            let go = || -> Result<SeedResult, Error> {
                let mut rng = perfcost::rng::Rng::derive(seed, 0xF17);
                let ex_ante = world.sample_ex_ante(cfg.data.n, rng.next_u64())?;
                let mut ex_posts = Vec::new();
                let mut benefits = Vec::new();
                if let Some(label_model) = &world.label_model {
                    let big = world.sample_ex_ante(
                        (4 * cfg.data.n).min(world.pool_size().unwrap_or(usize::MAX)),
                        rng.next_u64(),
                    )?;
                    let center = ordinary_logistic(&[&big], &plugin_opt(cfg, seed))?;
                    let _ = label_model;
                    for clf in world.sample_classifiers(
                        &center,
                        cfg.data.k,
                        cfg.data.deployment_cov,
                        rng.next_u64(),
                    ) {
                        let post = world.deploy(&clf, cfg.data.n, rng.next_u64())?;
                        ex_posts.push(post.measure);
                        benefits.push(world.benefit_for(&clf));
                    }
                } else {
                    let benefit = world.benefit.clone().ok_or_else(|| {
                        Error::Argument("fit-cost needs a benefit or a label model".into())
                    })?;
                    for _ in 0..cfg.data.k {
                        let post = world.deploy_benefit(&benefit, cfg.data.n, rng.next_u64())?;
                        ex_posts.push(post.measure);
                        benefits.push(benefit.clone());
                    }
                }
                let (potential, trace, converged, iterations) = match cfg.solver.fit_family {
                    FitFamily::Quadratic => {
                        let r = fit_bcd(
                            Some(&ex_ante.measure),
                            &ex_posts,
                            &benefits,
                            PotentialFamily::Quadratic,
                            &bcd_config(cfg, seed),
                        )?;
                        (r.potential, r.objective_trace, r.converged, r.iterations)
                    }
                    FitFamily::ConvexNet if cfg.data.k == 1 => {
                        // single ex-post: the direct pairwise-coupling trainer
                        let net_cfg = NetConfig {
                            hidden: cfg.solver.net_hidden,
                            seed,
                            lr: cfg.solver.net_lr,
                            epochs: cfg.solver.net_epochs,
                            refresh_every: cfg.solver.net_refresh_every,
                            ..Default::default()
                        };
                        let r = fit_convex_net(&ex_ante.measure, &ex_posts[0], &benefits[0], &net_cfg)?;
                        let iters = r.loss_trace.len();
                        (PotentialModel::ConvexNet(r.potential), r.loss_trace, true, iters)
                    }
                    FitFamily::ConvexNet => {
                        let r = fit_bcd(
                            Some(&ex_ante.measure),
                            &ex_posts,
                            &benefits,
                            PotentialFamily::ConvexNet { hidden: cfg.solver.net_hidden },
                            &bcd_config(cfg, seed),
                        )?;
                        (r.potential, r.objective_trace, r.converged, r.iterations)
                    }
                    FitFamily::Isotonic => {
                        let fitted = fit_isotonic_phi_prime_1d(
                            &ex_ante.measure,
                            &ex_posts[0],
                            &benefits[0],
                            seed,
                        )?;
                        (PotentialModel::Isotonic1d(fitted), vec![], true, 1)
                    }
                };
                let m_error = match (&potential, world.true_m()) {
                    (PotentialModel::Quadratic(q), Some(m_true)) => {
                        Some(q.matrix().sub(m_true).frobenius_norm() / m_true.frobenius_norm())
                    }
                    _ => None,
                };
                Ok(SeedResult { seed, potential, trace, converged, iterations, m_error })
            };
            go().map_err(|e| ReplicationError {
                context: format!("fit-cost seed {seed}"),
                message: e.to_string(),
            })
        })
        .collect();

    let mut files = Vec::new();
    let mut errors = Vec::new();
    let mut rows = Vec::new();
    let mut trace_rows = Vec::new();
    let mut trace_series = Vec::new();
    for r in results {
        match r {
            Ok(sr) => {
                let pot_path = ctx.out.join(format!("potential_seed{}.json", sr.seed));
                files.push(write_json(&pot_path, &sr.potential)?);
                rows.push(vec![
                    sr.seed.to_string(),
                    format!("{:?}", cfg.solver.fit_family).to_lowercase(),
                    sr.converged.to_string(),
                    sr.iterations.to_string(),
                    sr.trace.last().map(|v| f(*v)).unwrap_or_default(),
                    sr.m_error.map(f).unwrap_or_default(),
                ]);
                for (i, v) in sr.trace.iter().enumerate() {
                    trace_rows.push(vec![sr.seed.to_string(), i.to_string(), f(*v)]);
                }
                if !sr.trace.is_empty() {
                    trace_series.push(Series {
                        name: format!("seed {}", sr.seed),
                        points: sr
                            .trace
                            .iter()
                            .enumerate()
                            .map(|(i, v)| (i as f64, *v))
                            .collect(),
                    });
                }
            }
            Err(e) => errors.push(e),
        }
    }
    files.push(write_csv_rows(
        &ctx.out.join("fit_cost.csv"),
        &["seed", "family", "converged", "iterations", "final_objective", "m_error_fro"],
        &rows,
    )?);
    files.push(write_csv_rows(
        &ctx.out.join("fit_cost_trace.csv"),
        &["seed", "iteration", "objective"],
        &trace_rows,
    )?);
    if !trace_series.is_empty() {
        let p = ctx.out.join("fit_cost_trace.svg");
        line_chart(&p, "Alignment objective per outer iteration", "iteration", "objective", &trace_series)
            .map_err(io_err(&p))?;
        files.push(p);
    }
    finish(ctx, files, errors)
}

// --- fit-map-eval -----------------------------------------------------------

fn run_fit_map_eval(ctx: &KindContext) -> Result<RunOutcome, RunError> {
    let cfg = ctx.cfg;
    let world = &ctx.world;
    let benefit = world.benefit.clone().expect("validated");
    let theta = benefit.params().to_vec();
    let variants: Vec<(&str, BenefitSpec)> = vec![
        ("correct", benefit.clone()),
        ("log", BenefitSpec::Log { theta: theta.clone() }),
        ("cbrt", BenefitSpec::Power { theta: theta.clone(), exponent: RootExp::Third }),
    ];
    let sizes = cfg.data.sizes.clone().unwrap_or_else(|| vec![10, 25, 50, 100, 200]);
    let (q_lo, q_hi) = world.ex_ante_quantiles_1d(0.10, 0.90)?;
    let grid: Vec<f64> = (0..cfg.eval.grid_points)
        .map(|k| q_lo + (q_hi - q_lo) * k as f64 / (cfg.eval.grid_points - 1) as f64)
        .collect();

    struct Cell {
        n: usize,
        seed: u64,
        variant: &'static str,
        map_error: f64,
        phi_error: f64,
        fit: IsotonicDerivative1D,
    }
    let seeds = cfg.effective_seeds();
    let mut jobs = Vec::new();
    for &n in &sizes {
        for &seed in &seeds {
            jobs.push((n, seed));
        }
    }
    let outcomes: Vec<Result<Vec<Cell>, ReplicationError>> = jobs
        .par_iter()
        .map(|&(n, seed)| {
            let go = || -> Result<Vec<Cell>, Error> {
                let mut rng = perfcost::rng::Rng::derive(seed, 0xE1 + n as u64);
                let ex_ante = world.sample_ex_ante(n, rng.next_u64())?.measure;
                let ex_post = world.deploy_benefit(&benefit, n, rng.next_u64())?.measure;
                let mut cells = Vec::new();
                for (name, assumed) in &variants {
                    let fit = fit_isotonic_phi_prime_1d(&ex_ante, &ex_post, assumed, seed)?;
                    // phi' grid error, mean-centered on the grid
                    let gc: Vec<f64> = grid.iter().map(|&t| fit.eval(t)).collect();
                    let tc: Vec<f64> = grid
                        .iter()
                        .map(|&t| world.true_phi_prime_1d(t))
                        .collect::<Result<_, _>>()?;
                    let gm = gc.iter().sum::<f64>() / gc.len() as f64;
                    let tm = tc.iter().sum::<f64>() / tc.len() as f64;
                    let phi_error = (gc
                        .iter()
                        .zip(&tc)
                        .map(|(g, t)| ((g - gm) - (t - tm)).powi(2))
                        .sum::<f64>()
                        / grid.len() as f64)
                        .sqrt();
                    // map error against the true response
                    let model = PotentialModel::Isotonic1d(fit.clone());
                    let map = estimate_response_map(&model, assumed, assumed.params())?;
                    let mut total = 0.0;
                    for &x in &grid {
                        let t_true = best_response(&world.potential, &benefit, &[x])?[0];
                        total += match map.forward(&[x]) {
                            Ok(t_hat) => (t_hat[0] - t_true).abs(),
                            Err(_) => MAP_FAIL_PENALTY,
                        };
                    }
                    cells.push(Cell {
                        n,
                        seed,
                        variant: name,
                        map_error: total / grid.len() as f64,
                        phi_error,
                        fit,
                    });
                }
                Ok(cells)
            };
            go().map_err(|e| ReplicationError {
                context: format!("fit-map-eval n={n} seed={seed}"),
                message: e.to_string(),
            })
        })
        .collect();

    let mut files = Vec::new();
    let mut errors = Vec::new();
    let mut rows = Vec::new();
    let mut cells = Vec::new();
    for r in outcomes {
        match r {
            Ok(mut cs) => cells.append(&mut cs),
            Err(e) => errors.push(e),
        }
    }
    for c in &cells {
        rows.push(vec![
            c.n.to_string(),
            c.seed.to_string(),
            c.variant.to_string(),
            f(c.map_error),
            f(c.phi_error),
        ]);
    }
    files.push(write_csv_rows(
        &ctx.out.join("fit_map_eval.csv"),
        &["n", "seed", "benefit", "map_error", "phi_error"],
        &rows,
    )?);

    // medians for the error-vs-n chart
    let mut err_series = Vec::new();
    for (name, _) in &variants {
        let points: Vec<(f64, f64)> = sizes
            .iter()
            .map(|&n| {
                let errs: Vec<f64> = cells
                    .iter()
                    .filter(|c| c.n == n && c.variant == *name)
                    .map(|c| c.map_error)
                    .collect();
                (n as f64, median_of(errs))
            })
            .collect();
        err_series.push(Series { name: name.to_string(), points });
    }
    let p = ctx.out.join("fit_map_eval_error.svg");
    line_chart(&p, "Response-map estimation error", "n per distribution", "mean |T_hat - T| on grid", &err_series)
        .map_err(io_err(&p))?;
    files.push(p);

    // phi' overlay at the largest n, first seed
    if let Some(big_n) = sizes.iter().max().copied() {
        let mut overlay = vec![Series {
            name: "true".into(),
            points: grid
                .iter()
                .map(|&t| (t, world.true_phi_prime_1d(t).unwrap_or(f64::NAN)))
                .collect(),
        }];
        for (name, _) in &variants {
            if let Some(c) = cells.iter().find(|c| c.n == big_n && c.variant == *name && c.seed == seeds[0]) {
                // align additive constants on the grid for the overlay
                let mean_fit: f64 =
                    grid.iter().map(|&t| c.fit.eval(t)).sum::<f64>() / grid.len() as f64;
                let mean_true: f64 = grid
                    .iter()
                    .map(|&t| world.true_phi_prime_1d(t).unwrap_or(0.0))
                    .sum::<f64>()
                    / grid.len() as f64;
                overlay.push(Series {
                    name: format!("fit ({name})"),
                    points: grid
                        .iter()
                        .map(|&t| (t, c.fit.eval(t) - mean_fit + mean_true))
                        .collect(),
                });
            }
        }
        let p = ctx.out.join("phi_prime_overlay.svg");
        line_chart(&p, "Estimated vs true potential derivative", "z", "phi'(z)", &overlay)
            .map_err(io_err(&p))?;
        files.push(p);
    }

    let summary: Vec<serde_json::Value> = sizes
        .iter()
        .map(|&n| {
            let per_variant: serde_json::Map<String, serde_json::Value> = variants
                .iter()
                .map(|(name, _)| {
                    let errs: Vec<f64> = cells
                        .iter()
                        .filter(|c| c.n == n && c.variant == *name)
                        .map(|c| c.map_error)
                        .collect();
                    let (q1, q2, q3) = quartiles(errs);
                    (
                        name.to_string(),
                        serde_json::json!({"median": q2, "q1": q1, "q3": q3}),
                    )
                })
                .collect();
            serde_json::json!({"n": n, "map_error": per_variant})
        })
        .collect();
    files.push(write_json(&ctx.out.join("fit_map_eval_summary.json"), &summary)?);
    finish(ctx, files, errors)
}

// --- convergence-study --------------------------------------------------------

fn run_convergence_study(ctx: &KindContext) -> Result<RunOutcome, RunError> {
    let cfg = ctx.cfg;
    let world = &ctx.world;
    let d = world.dim();
    let betas: Vec<Vec<f64>> = match &cfg.data.betas {
        Some(b) => b.clone(),
        None if d == 2 => vec![
            vec![-1.5, -0.5],
            vec![-0.5, -1.5],
            vec![-1.0, -1.0],
            vec![-2.0, -0.7],
        ],
        None => {
            return Err(RunError::Other(
                "convergence-study needs data.betas for dimensions other than 2".into(),
            ))
        }
    };
    let sigma_true = world
        .true_m()
        .ok_or_else(|| RunError::Other("convergence-study needs a quadratic potential".into()))?
        .clone();
    let sizes = cfg.data.sizes.clone().expect("validated");
    let seeds = cfg.effective_seeds();
    let mut jobs = Vec::new();
    for &n in &sizes {
        for &seed in &seeds {
            jobs.push((n, seed));
        }
    }
    let outcomes: Vec<Result<(usize, u64, f64, f64), ReplicationError>> = jobs
        .par_iter()
        .map(|&(n, seed)| {
            let go = || -> Result<(usize, u64, f64, f64), Error> {
                let per = (n / betas.len()).max(5);
                let mut rng = perfcost::rng::Rng::derive(seed, 0xC6 + n as u64);
                let mut deployments = Vec::new();
                for beta in &betas {
                    let benefit = BenefitSpec::AbsLinear { beta: beta.clone() };
                    let a = world.sample_ex_ante(per, rng.next_u64())?.measure;
                    let b = world.deploy_benefit(&benefit, per, rng.next_u64())?.measure;
                    deployments.push((a, b, benefit));
                }
                let est = estimate_sigma_from_deployments(&deployments, seed)?;
                let err = est.raw.sub(&sigma_true).op_norm();
                let pairs = est.pairs as f64;
                let xbar = est.gram.scale(1.0 / pairs);
                let (eigs, _) = xbar.sym_eigen()?;
                let delta = ((2.0_f64 / 0.05).ln() / (2.0 * pairs)).sqrt();
                let sigma_e = sigma_true.op_norm(); // unit ex-ante noise scale
                let bound = 30.0 * 2.0_f64.sqrt() * sigma_e * eigs[eigs.len() - 1].max(0.0).sqrt()
                    / eigs[0].max(1e-300)
                    * ((2.0 * d as f64 / pairs).sqrt() + delta);
                Ok((n, seed, err, bound))
            };
            go().map_err(|e| ReplicationError {
                context: format!("convergence-study n={n} seed={seed}"),
                message: e.to_string(),
            })
        })
        .collect();

    let mut files = Vec::new();
    let mut errors = Vec::new();
    let mut rows = Vec::new();
    let mut oks = Vec::new();
    for r in outcomes {
        match r {
            Ok(o) => oks.push(o),
            Err(e) => errors.push(e),
        }
    }
    for (n, seed, err, bound) in &oks {
        rows.push(vec![
            n.to_string(),
            seed.to_string(),
            f(*err),
            f(*bound),
            (err <= bound).to_string(),
        ]);
    }
    files.push(write_csv_rows(
        &ctx.out.join("convergence_study.csv"),
        &["n", "seed", "sigma_err_op", "bound", "in_bound"],
        &rows,
    )?);
    let med_points: Vec<(f64, f64)> = sizes
        .iter()
        .map(|&n| {
            (
                n as f64,
                median_of(oks.iter().filter(|o| o.0 == n).map(|o| o.2).collect()),
            )
        })
        .collect();
    let p = ctx.out.join("convergence_study.svg");
    line_chart(
        &p,
        "Paired-regression error vs sample size",
        "n (total matched pairs)",
        "operator-norm error",
        &[Series { name: "median error".into(), points: med_points.clone() }],
    )
    .map_err(io_err(&p))?;
    files.push(p);
    let summary: Vec<serde_json::Value> = med_points
        .iter()
        .map(|(n, m)| serde_json::json!({"n": n, "median_err": m}))
        .collect();
    files.push(write_json(&ctx.out.join("convergence_study_summary.json"), &summary)?);
    finish(ctx, files, errors)
}

// --- optimize / benchmark shared pieces --------------------------------------

struct BenchRow {
    method: &'static str,
    k: usize,
    n: usize,
    seed: u64,
    accuracy: Option<f64>,
    cross_entropy: Option<f64>,
    m_error: Option<f64>,
}

impl BenchRow {
    fn to_record(&self) -> Vec<String> {
        vec![
            self.method.to_string(),
            self.k.to_string(),
            self.n.to_string(),
            self.seed.to_string(),
            self.accuracy.map(f).unwrap_or_default(),
            self.cross_entropy.map(f).unwrap_or_default(),
            self.m_error.map(f).unwrap_or_default(),
        ]
    }
}

/// The classification world shared by optimize and benchmark: center
/// classifier, oracle, and the per-seed deployment data.
struct ClassificationSetup {
    center: LinearClassifier,
    oracle: LinearClassifier,
    oracle_metrics: perfcost::perf_risk::PerformativeMetrics,
}

fn classification_setup(ctx: &KindContext) -> Result<ClassificationSetup, Error> {
    let cfg = ctx.cfg;
    let world = &ctx.world;
    let opt = plugin_opt(cfg, 0);
    let pool_cap = world.pool_size().unwrap_or(usize::MAX);
    let big = world.sample_ex_ante((4 * cfg.data.n).min(pool_cap), 0xB16)?;
    let center = ordinary_logistic(&[&big], &opt)?;
    let m_true = world
        .true_m()
        .ok_or_else(|| Error::Argument("classification pipelines need the true M".into()))?;
    let oracle_train = world.sample_ex_ante((10 * cfg.eval.n_eval).min(pool_cap), 0x02AC1E)?;
    let oracle = plugin_logistic(&oracle_train, &[], &[], Some(m_true), &opt)?;
    let oracle_metrics = eval_clf(ctx, &oracle, 0x5EED)?;
    Ok(ClassificationSetup { center, oracle, oracle_metrics })
}

fn eval_clf(
    ctx: &KindContext,
    clf: &LinearClassifier,
    seed: u64,
) -> Result<perfcost::perf_risk::PerformativeMetrics, Error> {
    let world = &ctx.world;
    let n_eval = ctx.cfg.eval.n_eval.min(world.pool_size().unwrap_or(usize::MAX));
    let induced = world.deploy(clf, n_eval, seed)?;
    let mut correct = 0usize;
    let mut ce = 0.0;
    for (x, &y) in induced.measure.points().iter().zip(&induced.labels) {
        let p = clf.predict_proba(x).clamp(1e-12, 1.0 - 1e-12);
        if (p >= 0.5) == (y == 1.0) {
            correct += 1;
        }
        ce -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
    }
    Ok(perfcost::perf_risk::PerformativeMetrics {
        accuracy: correct as f64 / n_eval as f64,
        cross_entropy: ce / n_eval as f64,
        n_eval,
        seed,
    })
}

fn run_optimize(ctx: &KindContext) -> Result<RunOutcome, RunError> {
    let cfg = ctx.cfg;
    let world = &ctx.world;
    let setup = classification_setup(ctx).map_err(|e| RunError::Other(e.to_string()))?;
    let m_true = world.true_m().expect("validated").clone();
    let seeds = cfg.effective_seeds();

    let outcomes: Vec<Result<Vec<BenchRow>, ReplicationError>> = seeds
        .par_iter()
        .map(|&seed| {
            let go = || -> Result<Vec<BenchRow>, Error> {
                let mut rng = perfcost::rng::Rng::derive(seed, 0x0B7);
                let k = cfg.data.k;
                let n = cfg.data.n;
                let deployed =
                    world.sample_classifiers(&setup.center, k, cfg.data.deployment_cov, rng.next_u64());
                let ex_ante = world.sample_ex_ante(n, rng.next_u64())?;
                let mut ex_posts = Vec::new();
                for clf in &deployed {
                    ex_posts.push(world.deploy(clf, n, rng.next_u64())?);
                }
                let benefits: Vec<BenefitSpec> =
                    deployed.iter().map(|c| world.benefit_for(c)).collect();
                let measures: Vec<_> = ex_posts.iter().map(|e| e.measure.clone()).collect();
                let report = fit_bcd(
                    Some(&ex_ante.measure),
                    &measures,
                    &benefits,
                    PotentialFamily::Quadratic,
                    &bcd_config(cfg, seed),
                )?;
                let m_hat = match &report.potential {
                    PotentialModel::Quadratic(q) => q.matrix().clone(),
                    _ => unreachable!(),
                };
                let m_err = m_hat.sub(&m_true).frobenius_norm() / m_true.frobenius_norm();
                let opt = plugin_opt(cfg, seed);
                let plugin_est =
                    plugin_logistic(&ex_ante, &ex_posts, &deployed, Some(&m_hat), &opt)?;
                let plugin_true =
                    plugin_logistic(&ex_ante, &ex_posts, &deployed, Some(&m_true), &opt)?;
                let em = eval_clf(ctx, &plugin_est, 0x5EED)?;
                let et = eval_clf(ctx, &plugin_true, 0x5EED)?;
                Ok(vec![
                    BenchRow {
                        method: "plugin",
                        k,
                        n,
                        seed,
                        accuracy: Some(em.accuracy),
                        cross_entropy: Some(em.cross_entropy),
                        m_error: Some(m_err),
                    },
                    BenchRow {
                        method: "plugin_true_m",
                        k,
                        n,
                        seed,
                        accuracy: Some(et.accuracy),
                        cross_entropy: Some(et.cross_entropy),
                        m_error: Some(0.0),
                    },
                    BenchRow {
                        method: "oracle",
                        k,
                        n,
                        seed,
                        accuracy: Some(setup.oracle_metrics.accuracy),
                        cross_entropy: Some(setup.oracle_metrics.cross_entropy),
                        m_error: Some(0.0),
                    },
                ])
            };
            go().map_err(|e| ReplicationError {
                context: format!("optimize seed {seed}"),
                message: e.to_string(),
            })
        })
        .collect();

    let mut files = Vec::new();
    let mut errors = Vec::new();
    let mut rows = Vec::new();
    for r in outcomes {
        match r {
            Ok(rs) => rows.extend(rs.iter().map(|r| r.to_record())),
            Err(e) => errors.push(e),
        }
    }
    files.push(write_csv_rows(
        &ctx.out.join("optimize.csv"),
        &["method", "K", "n", "seed", "accuracy", "cross_entropy", "M_error_fro"],
        &rows,
    )?);
    files.push(write_json(
        &ctx.out.join("optimize_summary.json"),
        &serde_json::json!({
            "oracle_cross_entropy": setup.oracle_metrics.cross_entropy,
            "oracle_accuracy": setup.oracle_metrics.accuracy,
            "oracle": {"alpha": setup.oracle.alpha, "beta": setup.oracle.beta},
        }),
    )?);
    finish(ctx, files, errors)
}

fn run_benchmark(ctx: &KindContext) -> Result<RunOutcome, RunError> {
    let cfg = ctx.cfg;
    let world = &ctx.world;
    let setup = classification_setup(ctx).map_err(|e| RunError::Other(e.to_string()))?;
    let m_true = world.true_m().expect("validated").clone();
    let k_grid: Vec<usize> = cfg
        .data
        .k_grid
        .clone()
        .unwrap_or_else(|| (1..=cfg.data.k).collect());
    let k_max = k_grid.iter().copied().max().unwrap_or(1).max(cfg.data.k);
    let seeds = cfg.effective_seeds();

    let outcomes: Vec<Result<Vec<BenchRow>, ReplicationError>> = seeds
        .par_iter()
        .map(|&seed| {
            let go = || -> Result<Vec<BenchRow>, Error> {
                let mut rng = perfcost::rng::Rng::derive(seed, 0xBE6C);
                let n = cfg.data.n;
                let deployed =
                    world.sample_classifiers(&setup.center, k_max, cfg.data.deployment_cov, rng.next_u64());
                let ex_ante = world.sample_ex_ante(n, rng.next_u64())?;
                let mut ex_posts: Vec<LabeledData> = Vec::new();
                for clf in &deployed {
                    ex_posts.push(world.deploy(clf, n, rng.next_u64())?);
                }
                // RGD trajectories per eta, shared across K prefixes.
                let rgd_seed = rng.next_u64();
                let mut rgd_trajs = Vec::new();
                for &eta in &cfg.solver.rgd_etas {
                    if let Ok(traj) = rgd(
                        |clf, m, s| world.deploy(clf, m, s),
                        &setup.center,
                        eta,
                        k_max,
                        cfg.solver.rgd_samples_per_round,
                        rgd_seed,
                    ) {
                        rgd_trajs.push(traj);
                    }
                }
                let opt = plugin_opt(cfg, seed);
                let mut rows = Vec::new();
                for &k in &k_grid {
                    let dep_k = &deployed[..k];
                    let posts_k = &ex_posts[..k];
                    let benefits: Vec<BenefitSpec> =
                        dep_k.iter().map(|c| world.benefit_for(c)).collect();
                    let measures: Vec<_> = posts_k.iter().map(|e| e.measure.clone()).collect();
                    // ours: alternating fit for M, then plug in
                    match fit_bcd(
                        Some(&ex_ante.measure),
                        &measures,
                        &benefits,
                        PotentialFamily::Quadratic,
                        &bcd_config(cfg, seed),
                    ) {
                        Ok(report) => {
                            let m_hat = match &report.potential {
                                PotentialModel::Quadratic(q) => q.matrix().clone(),
                                _ => unreachable!(),
                            };
                            let m_err =
                                m_hat.sub(&m_true).frobenius_norm() / m_true.frobenius_norm();
                            let clf = plugin_logistic(
                                &ex_ante,
                                posts_k,
                                dep_k,
                                Some(&m_hat),
                                &opt,
                            )?;
                            let m = eval_clf(ctx, &clf, 0x5EED)?;
                            rows.push(BenchRow {
                                method: "plugin",
                                k,
                                n,
                                seed,
                                accuracy: Some(m.accuracy),
                                cross_entropy: Some(m.cross_entropy),
                                m_error: Some(m_err),
                            });
                        }
                        Err(_) => rows.push(BenchRow {
                            method: "plugin",
                            k,
                            n,
                            seed,
                            accuracy: None,
                            cross_entropy: None,
                            m_error: None,
                        }),
                    }
                    // least-squares baseline for M
                    match ls_baseline(&ex_ante.measure, &measures, dep_k) {
                        Ok(fit) => {
                            let m_err =
                                fit.m_hat.sub(&m_true).frobenius_norm() / m_true.frobenius_norm();
                            match perfcost::potentials::QuadraticPotential::from_matrix_projected(
                                &fit.m_hat,
                            ) {
                                Ok(qp) => {
                                    let clf = plugin_logistic(
                                        &ex_ante,
                                        posts_k,
                                        dep_k,
                                        Some(qp.matrix()),
                                        &opt,
                                    )?;
                                    let m = eval_clf(ctx, &clf, 0x5EED)?;
                                    rows.push(BenchRow {
                                        method: "ls",
                                        k,
                                        n,
                                        seed,
                                        accuracy: Some(m.accuracy),
                                        cross_entropy: Some(m.cross_entropy),
                                        m_error: Some(m_err),
                                    });
                                }
                                Err(_) => rows.push(BenchRow {
                                    method: "ls",
                                    k,
                                    n,
                                    seed,
                                    accuracy: None,
                                    cross_entropy: None,
                                    m_error: Some(m_err),
                                }),
                            }
                        }
                        Err(_) => rows.push(BenchRow {
                            method: "ls",
                            k,
                            n,
                            seed,
                            accuracy: None,
                            cross_entropy: None,
                            m_error: None,
                        }),
                    }
                    // RGD after k rounds, best eta
                    let mut best: Option<perfcost::perf_risk::PerformativeMetrics> = None;
                    for traj in &rgd_trajs {
                        if let Some(theta) = traj.get(k) {
                            let m = eval_clf(ctx, theta, 0x5EED)?;
                            if best
                                .as_ref()
                                .map(|b| m.cross_entropy < b.cross_entropy)
                                .unwrap_or(true)
                            {
                                best = Some(m);
                            }
                        }
                    }
                    rows.push(BenchRow {
                        method: "rgd",
                        k,
                        n,
                        seed,
                        accuracy: best.as_ref().map(|m| m.accuracy),
                        cross_entropy: best.as_ref().map(|m| m.cross_entropy),
                        m_error: None,
                    });
                    // oracle reference (flat in K) and the PerfGD placeholder
                    rows.push(BenchRow {
                        method: "oracle",
                        k,
                        n,
                        seed,
                        accuracy: Some(setup.oracle_metrics.accuracy),
                        cross_entropy: Some(setup.oracle_metrics.cross_entropy),
                        m_error: Some(0.0),
                    });
                    rows.push(BenchRow {
                        method: "perfgd",
                        k,
                        n,
                        seed,
                        accuracy: None,
                        cross_entropy: None,
                        m_error: None,
                    });
                }
                Ok(rows)
            };
            go().map_err(|e| ReplicationError {
                context: format!("benchmark seed {seed}"),
                message: e.to_string(),
            })
        })
        .collect();

    let mut files = Vec::new();
    let mut errors = Vec::new();
    let mut all_rows: Vec<BenchRow> = Vec::new();
    for r in outcomes {
        match r {
            Ok(rs) => all_rows.extend(rs),
            Err(e) => errors.push(e),
        }
    }
    let records: Vec<Vec<String>> = all_rows.iter().map(|r| r.to_record()).collect();
    files.push(write_csv_rows(
        &ctx.out.join("benchmark.csv"),
        &["method", "K", "n", "seed", "accuracy", "cross_entropy", "M_error_fro"],
        &records,
    )?);

    // methods with numbers get charted; the placeholder stays in the CSV only
    let mut ce_series = Vec::new();
    let mut acc_series = Vec::new();
    for method in ["oracle", "plugin", "rgd", "ls"] {
        let ce_pts: Vec<(f64, f64)> = k_grid
            .iter()
            .filter_map(|&k| {
                let vals: Vec<f64> = all_rows
                    .iter()
                    .filter(|r| r.method == method && r.k == k)
                    .filter_map(|r| r.cross_entropy)
                    .collect();
                if vals.is_empty() {
                    None
                } else {
                    Some((k as f64, median_of(vals)))
                }
            })
            .collect();
        let acc_pts: Vec<(f64, f64)> = k_grid
            .iter()
            .filter_map(|&k| {
                let vals: Vec<f64> = all_rows
                    .iter()
                    .filter(|r| r.method == method && r.k == k)
                    .filter_map(|r| r.accuracy)
                    .collect();
                if vals.is_empty() {
                    None
                } else {
                    Some((k as f64, median_of(vals)))
                }
            })
            .collect();
        if !ce_pts.is_empty() {
            ce_series.push(Series { name: method.into(), points: ce_pts });
        }
        if !acc_pts.is_empty() {
            acc_series.push(Series { name: method.into(), points: acc_pts });
        }
    }
    let p = ctx.out.join("benchmark_cross_entropy.svg");
    line_chart(&p, "Performative cross-entropy vs published classifiers", "K", "cross-entropy", &ce_series)
        .map_err(io_err(&p))?;
    files.push(p);
    let p = ctx.out.join("benchmark_accuracy.svg");
    line_chart(&p, "Performative accuracy vs published classifiers", "K", "accuracy", &acc_series)
        .map_err(io_err(&p))?;
    files.push(p);

    // JSON summary: per method x K medians and IQRs
    let mut summary = serde_json::Map::new();
    for method in ["oracle", "plugin", "rgd", "ls", "perfgd"] {
        let per_k: Vec<serde_json::Value> = k_grid
            .iter()
            .map(|&k| {
                let vals: Vec<f64> = all_rows
                    .iter()
                    .filter(|r| r.method == method && r.k == k)
                    .filter_map(|r| r.cross_entropy)
                    .collect();
                if vals.is_empty() {
                    serde_json::json!({"K": k, "cross_entropy": null})
                } else {
                    let (q1, q2, q3) = quartiles(vals);
                    serde_json::json!({"K": k, "cross_entropy": {"median": q2, "q1": q1, "q3": q3}})
                }
            })
            .collect();
        summary.insert(method.to_string(), serde_json::Value::Array(per_k));
    }
    files.push(write_json(&ctx.out.join("benchmark_summary.json"), &summary)?);
    finish(ctx, files, errors)
}

fn run_ols_oracle(ctx: &KindContext) -> Result<RunOutcome, RunError> {
    let cfg = ctx.cfg;
    let ols = cfg.ols.as_ref().expect("validated");
    let m = ctx
        .world
        .true_m()
        .ok_or_else(|| RunError::Other("ols-oracle needs a quadratic potential".into()))?
        .clone();
    let world = OlsWorld::new(ols.theta_star.clone(), m, ols.sigma)
        .map_err(|e| RunError::Other(e.to_string()))?;
    let t2: f64 = ols.theta_star.iter().map(|v| v * v).sum();
    let go = || -> Result<serde_json::Value, Error> {
        let c = misspecified_opt_scale(t2)?;
        let theta_hat: Vec<f64> = ols.theta_star.iter().map(|v| c * v).collect();
        let pr_hat = strategic_ols_pr(&theta_hat, &world)?;
        let regret = ols_regret_of_misspecification(&world)?;
        Ok(serde_json::json!({
            "c": c,
            "pr_at_c_theta_star": pr_hat,
            "pr_min_est": pr_hat - regret,
            "regret": regret,
        }))
    };
    match go() {
        Ok(value) => {
            let file = write_json(&ctx.out.join("ols_oracle.json"), &value)?;
            finish(ctx, vec![file], vec![])
        }
        Err(e) => finish(
            ctx,
            vec![],
            vec![ReplicationError { context: "ols-oracle".into(), message: e.to_string() }],
        ),
    }
}

/// Writes the error log (if any) and assembles the outcome.
fn finish(
    ctx: &KindContext,
    mut files: Vec<PathBuf>,
    errors: Vec<ReplicationError>,
) -> Result<RunOutcome, RunError> {
    if !errors.is_empty() {
        let p = ctx.out.join("errors.json");
        files.push(write_json(&p, &errors)?);
    }
    Ok(RunOutcome { files, replication_errors: errors })
}
