//! Potential estimation from samples: block-coordinate descent that
//! alternates a free-support barycenter of the gradient pushforwards with a
//! fixed-coupling potential update, plus the specialized 1D isotonic, paired
//! quadratic, and convex-net estimators.

mod convex_net;
mod isotonic;
mod response_map;
mod sigma;

pub use convex_net::{fit_convex_net, ConvexNetFit, NetConfig};
pub use isotonic::{fit_isotonic_phi_prime_1d, isotonic_fit_residual};
pub use response_map::{estimate_response_map, invert_potential_gradient, ResponseMap};
pub use sigma::{estimate_sigma_from_deployments, estimate_sigma_paired, SigmaEstimate};

use serde::{Deserialize, Serialize};

use crate::agents::BenefitSpec;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::measures::{pushforward, EmpiricalMeasure};
use crate::ot::{free_support_barycenter, BarycenterConfig, BarycenterInit, Coupling};
use crate::potentials::{grad_potential, PotentialModel, QuadraticPotential};

use convex_net::NetParams;

/// Which potential family the block-coordinate fit optimizes over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialFamily {
    Quadratic,
    ConvexNet { hidden: usize },
    /// Not supported by the alternating fit; use
    /// [`fit_isotonic_phi_prime_1d`] instead.
    Isotonic,
}

/// Configuration of the alternating fit.
#[derive(Debug, Clone)]
pub struct BcdConfig {
    pub max_outer_iters: usize,
    /// Relative improvement threshold on the alignment objective.
    pub objective_tol: f64,
    pub barycenter: BarycenterConfig,
    /// Barycenter support size; defaults to the first measure's sample size.
    pub support_size: Option<usize>,
    /// Learning rate for the convex-net potential step.
    pub net_lr: f64,
    /// Gradient steps per outer iteration for the convex-net family.
    pub net_steps_per_outer: usize,
    pub seed: u64,
    /// Optional warm start; defaults to the identity quadratic or a seeded
    /// network.
    pub init: Option<PotentialModel>,
}

impl Default for BcdConfig {
    fn default() -> Self {
        BcdConfig {
            max_outer_iters: 50,
            objective_tol: 1e-6,
            barycenter: BarycenterConfig { max_iter: 12, tol: 1e-9, ..Default::default() },
            support_size: None,
            net_lr: 1e-2,
            net_steps_per_outer: 50,
            seed: 0,
            init: None,
        }
    }
}

/// Outcome of a potential fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub potential: PotentialModel,
    /// Alignment objective per outer iteration (non-increasing).
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Transport loss sum_ij Pi_ij || grad phi(z_i) - grad phi(z'_j) + grad B(z'_j) ||^2
/// for a coupling whose source carries ex-ante points and target ex-post
/// points.
pub fn ot_loss(p: &PotentialModel, coupling: &Coupling, benefit: &BenefitSpec) -> Result<f64> {
    let d = p.dim();
    if coupling.source().dim() != d || coupling.target().dim() != d || benefit.dim() != d {
        return Err(Error::Shape("ot_loss dimensions disagree".into()));
    }
    let grads_src: Vec<Vec<f64>> = coupling
        .source()
        .points()
        .iter()
        .map(|z| grad_potential(p, z))
        .collect::<Result<_>>()?;
    let grads_tgt: Vec<Vec<f64>> = coupling
        .target()
        .points()
        .iter()
        .map(|z| grad_potential(p, z))
        .collect::<Result<_>>()?;
    let bens: Vec<Vec<f64>> = coupling
        .target()
        .points()
        .iter()
        .map(|z| benefit.grad(z))
        .collect::<Result<_>>()?;
    let mut total = 0.0;
    for (i, row) in coupling.plan().iter().enumerate() {
        for (j, &w) in row.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            let sq: f64 = (0..d)
                .map(|c| {
                    let r = grads_src[i][c] - grads_tgt[j][c] + bens[j][c];
                    r * r
                })
                .sum();
            total += w * sq;
        }
    }
    Ok(total)
}

/// A matched pair for the potential step: minimize sum w || psi(x) - y ||^2.
struct FitPair {
    weight: f64,
    x: Vec<f64>,
    y: Vec<f64>,
}

fn quadratic_surrogate(pairs: &[FitPair], m: &Matrix) -> f64 {
    pairs
        .iter()
        .map(|p| {
            let mx = m.matvec(&p.x);
            p.weight
                * mx.iter()
                    .zip(&p.y)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
        })
        .sum()
}

/// Closed-form least squares over all matrices, then projection to the PD
/// cone through the Cholesky parameterization. A halving backtrack toward
/// the previous iterate keeps the surrogate non-increasing even when the
/// projection moves the minimizer.
fn quadratic_potential_step(pairs: &[FitPair], current: &QuadraticPotential) -> Result<QuadraticPotential> {
    let d = current.dim();
    let mut sxx = Matrix::zeros(d, d);
    let mut syx = Matrix::zeros(d, d);
    for p in pairs {
        for a in 0..d {
            for b in 0..d {
                sxx[(a, b)] += p.weight * p.x[a] * p.x[b];
                syx[(a, b)] += p.weight * p.y[a] * p.x[b];
            }
        }
    }
    for a in 0..d {
        sxx[(a, a)] += 1e-12;
    }
    // M Sxx = Syx  =>  M' = Sxx^{-1} Syx' (Sxx symmetric)
    let m_ls = sxx.solve_multi(&syx.transpose())?.transpose();
    let projected = m_ls.symmetrize().psd_clip(crate::potentials::CHOL_DIAG_FLOOR)?;

    let f_old = quadratic_surrogate(pairs, current.matrix());
    let mut candidate = projected;
    for _ in 0..40 {
        let f_new = quadratic_surrogate(pairs, &candidate);
        if f_new <= f_old + 1e-12 * (1.0 + f_old) {
            return QuadraticPotential::from_matrix_projected(&candidate);
        }
        candidate = candidate.add(current.matrix()).scale(0.5);
    }
    Ok(current.clone())
}

fn net_potential_step(
    pairs: &[FitPair],
    current: &NetParams,
    lr: f64,
    steps: usize,
) -> Result<NetParams> {
    let mut params = current.clone();
    let surrogate = |p: &NetParams| -> f64 {
        pairs
            .iter()
            .map(|pr| {
                let psi = p.psi(&pr.x);
                pr.weight
                    * psi
                        .iter()
                        .zip(&pr.y)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
            })
            .sum()
    };
    let f_start = surrogate(&params);
    let mut best = params.clone();
    let mut f_best = f_start;
    for _ in 0..steps {
        let mut grads = params.zero_grads();
        for pr in pairs {
            let psi = params.psi(&pr.x);
            let adj: Vec<f64> = psi
                .iter()
                .zip(&pr.y)
                .map(|(a, b)| 2.0 * pr.weight * (a - b))
                .collect();
            params.accumulate_adjoint(&pr.x, &adj, &mut grads);
        }
        params.step(&grads, lr);
        let f = surrogate(&params);
        if f < f_best {
            f_best = f;
            best = params.clone();
        }
        if !f.is_finite() || f > 10.0 * (f_start + 1e-12) {
            return Err(Error::LearningRate(
                "net potential step diverged; lower net_lr".into(),
            ));
        }
    }
    Ok(best)
}

/// Default warm start for the quadratic family: the paired-OT regression
/// estimate when an ex-ante sample is available, identity otherwise. The
/// alternating fit only needs "an initial estimate"; starting from the cheap
/// regression instead of the identity saves most of the outer iterations.
fn default_quadratic_init(
    ex_ante: Option<&EmpiricalMeasure>,
    ex_posts: &[EmpiricalMeasure],
    benefits: &[BenefitSpec],
    seed: u64,
    dim: usize,
) -> QuadraticPotential {
    if let Some(p) = ex_ante {
        let deployments: Vec<(EmpiricalMeasure, EmpiricalMeasure, BenefitSpec)> = ex_posts
            .iter()
            .zip(benefits)
            .map(|(q, b)| (p.clone(), q.clone(), b.clone()))
            .collect();
        if let Ok(est) = sigma::estimate_sigma_from_deployments(&deployments, seed) {
            if let Ok(q) = QuadraticPotential::from_matrix_projected(&est.psd) {
                return q;
            }
        }
    }
    QuadraticPotential::from_matrix(&Matrix::identity(dim)).expect("identity is PD")
}

enum FitState {
    Quadratic(QuadraticPotential),
    Net(NetParams),
}

impl FitState {
    fn to_model(&self) -> Result<PotentialModel> {
        Ok(match self {
            FitState::Quadratic(q) => PotentialModel::Quadratic(q.clone()),
            FitState::Net(n) => PotentialModel::ConvexNet(n.to_potential()?),
        })
    }
}

/// Aligns gradient pushforwards of the ex-ante sample (if present) and the
/// ex-post samples by alternating a Wasserstein barycenter with a
/// fixed-coupling potential update, until the alignment objective stalls.
pub fn fit_bcd(
    ex_ante: Option<&EmpiricalMeasure>,
    ex_posts: &[EmpiricalMeasure],
    benefits: &[BenefitSpec],
    family: PotentialFamily,
    cfg: &BcdConfig,
) -> Result<FitReport> {
    if ex_posts.is_empty() {
        return Err(Error::EmptyData("need at least one ex-post sample".into()));
    }
    if ex_posts.len() != benefits.len() {
        return Err(Error::Argument(format!(
            "{} ex-post samples but {} benefits",
            ex_posts.len(),
            benefits.len()
        )));
    }
    if ex_ante.is_none() && ex_posts.len() < 2 {
        return Err(Error::Argument(
            "ex-post-only estimation needs at least two deployments".into(),
        ));
    }
    let d = ex_posts[0].dim();
    if ex_posts.iter().any(|m| m.dim() != d)
        || benefits.iter().any(|b| b.dim() != d)
        || ex_ante.map(|m| m.dim() != d).unwrap_or(false)
    {
        return Err(Error::Shape("sample and benefit dimensions disagree".into()));
    }
    for b in benefits {
        b.validate()?;
    }

    let mut state = match (family, &cfg.init) {
        (PotentialFamily::Isotonic, _) => {
            return Err(Error::Argument(
                "the isotonic family is fit by fit_isotonic_phi_prime_1d, not fit_bcd".into(),
            ))
        }
        (PotentialFamily::Quadratic, Some(PotentialModel::Quadratic(q))) => {
            FitState::Quadratic(q.clone())
        }
        (PotentialFamily::Quadratic, None) => {
            FitState::Quadratic(default_quadratic_init(ex_ante, ex_posts, benefits, cfg.seed, d))
        }
        (PotentialFamily::ConvexNet { .. }, Some(PotentialModel::ConvexNet(n))) => {
            FitState::Net(NetParams::from_potential(n))
        }
        (PotentialFamily::ConvexNet { hidden }, None) => {
            if hidden == 0 {
                return Err(Error::Argument("need at least one hidden unit".into()));
            }
            FitState::Net(NetParams::init(hidden, d, cfg.seed))
        }
        (_, Some(other)) => {
            return Err(Error::Argument(format!(
                "init potential family does not match the requested family ({other:?})"
            )))
        }
    };

    // Benefit gradients at the ex-post support points are fixed data.
    let benefit_grads: Vec<Vec<Vec<f64>>> = ex_posts
        .iter()
        .zip(benefits)
        .map(|(m, b)| m.points().iter().map(|p| b.grad(p)).collect::<Result<_>>())
        .collect::<Result<_>>()?;

    let first_len = ex_ante.map(|m| m.len()).unwrap_or_else(|| ex_posts[0].len());
    let support_size = cfg.support_size.unwrap_or(first_len);

    let pushforwards = |state: &FitState| -> Result<Vec<EmpiricalMeasure>> {
        let grad = |z: &[f64]| -> Vec<f64> {
            match state {
                FitState::Quadratic(q) => q.grad(z),
                FitState::Net(n) => n.psi(z),
            }
        };
        let mut out = Vec::with_capacity(ex_posts.len() + 1);
        if let Some(p) = ex_ante {
            out.push(pushforward(p, |z| grad(z))?);
        }
        for (m, grads) in ex_posts.iter().zip(&benefit_grads) {
            let pts: Vec<Vec<f64>> = m
                .points()
                .iter()
                .zip(grads)
                .map(|(p, g)| {
                    let gp = grad(p);
                    gp.iter().zip(g).map(|(a, b)| a - b).collect()
                })
                .collect();
            out.push(EmpiricalMeasure::new(pts, m.weights().to_vec())?);
        }
        Ok(out)
    };

    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut warm: Option<EmpiricalMeasure> = None;
    let mut iterations = 0;

    for _outer in 0..cfg.max_outer_iters.max(1) {
        let pushes = pushforwards(&state)?;
        let init = BarycenterInit::Measure(warm.clone().unwrap_or_else(|| pushes[0].clone()));
        let bary = free_support_barycenter(&pushes, support_size, init, &cfg.barycenter)?;
        let objective = bary.objective();
        iterations += 1;
        let stalled = trace
            .last()
            .map(|prev| (prev - objective).abs() < cfg.objective_tol * prev.abs().max(1.0))
            .unwrap_or(false);
        trace.push(objective);
        if stalled {
            converged = true;
            break;
        }
        warm = Some(bary.barycenter.clone());

        // Assemble matched pairs (weight, original point, target) from the
        // couplings; the pushforward preserves atom indices, so column j of
        // each plan refers to original atom j.
        let mut pairs: Vec<FitPair> = Vec::new();
        let mut idx = 0usize;
        if let Some(p) = ex_ante {
            let c = &bary.couplings[idx];
            idx += 1;
            for (i, row) in c.plan().iter().enumerate() {
                let mu = bary.barycenter.point(i);
                for (j, &w) in row.iter().enumerate() {
                    if w > 0.0 {
                        pairs.push(FitPair { weight: w, x: p.point(j).to_vec(), y: mu.to_vec() });
                    }
                }
            }
        }
        for (k, m) in ex_posts.iter().enumerate() {
            let c = &bary.couplings[idx + k];
            for (i, row) in c.plan().iter().enumerate() {
                let mu = bary.barycenter.point(i);
                for (j, &w) in row.iter().enumerate() {
                    if w > 0.0 {
                        let y: Vec<f64> = mu
                            .iter()
                            .zip(&benefit_grads[k][j])
                            .map(|(a, b)| a + b)
                            .collect();
                        pairs.push(FitPair { weight: w, x: m.point(j).to_vec(), y });
                    }
                }
            }
        }

        state = match state {
            FitState::Quadratic(q) => FitState::Quadratic(quadratic_potential_step(&pairs, &q)?),
            FitState::Net(n) => {
                FitState::Net(net_potential_step(&pairs, &n, cfg.net_lr, cfg.net_steps_per_outer)?)
            }
        };
    }

    Ok(FitReport { potential: state.to_model()?, objective_trace: trace, converged, iterations })
}
