//! Convex-net potential training: alternate exact couplings between the two
//! gradient pushforwards with projected gradient steps on the transport loss,
//! using exact analytic parameter gradients.

use crate::agents::BenefitSpec;
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::measures::EmpiricalMeasure;
use crate::ot::{exact_coupling_with_cap, Coupling};
use crate::potentials::ConvexNetPotential;
use crate::rng::Rng;

/// Hyperparameters for convex-net potential fits.
#[derive(Debug, Clone)]
pub struct NetConfig {
    pub hidden: usize,
    pub seed: u64,
    pub lr: f64,
    pub epochs: usize,
    /// Gradient steps between coupling refreshes.
    pub refresh_every: usize,
    pub exact_cap: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            hidden: 5,
            seed: 0,
            lr: 1e-2,
            epochs: 500,
            refresh_every: 10,
            exact_cap: crate::ot::DEFAULT_EXACT_CAP,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConvexNetFit {
    pub potential: ConvexNetPotential,
    /// Transport loss at every coupling refresh, ending with the final loss.
    pub loss_trace: Vec<f64>,
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Mutable view of the network as raw parameters for the optimizer.
#[derive(Debug, Clone)]
pub(crate) struct NetParams {
    pub omega: Matrix,
    pub kappa: Vec<f64>,
    pub delta: Vec<f64>,
}

impl NetParams {
    pub fn init(hidden: usize, dim: usize, seed: u64) -> Self {
        let mut rng = Rng::seed_from_u64(seed);
        let mut omega = Matrix::zeros(hidden, dim);
        let mut row = vec![0.0; dim];
        let scale = 1.0 / (dim as f64).sqrt();
        for j in 0..hidden {
            rng.fill_standard_normal(&mut row);
            for (c, &v) in row.iter().enumerate() {
                omega[(j, c)] = v * scale;
            }
        }
        NetParams {
            omega,
            kappa: vec![0.0; hidden],
            delta: vec![1.0 / hidden as f64; hidden],
        }
    }

    pub fn from_potential(p: &ConvexNetPotential) -> Self {
        NetParams {
            omega: p.omega().clone(),
            kappa: p.kappa().to_vec(),
            delta: p.delta().to_vec(),
        }
    }

    pub fn to_potential(&self) -> Result<ConvexNetPotential> {
        ConvexNetPotential::new(self.omega.clone(), self.kappa.clone(), self.delta.clone())
    }

    pub fn hidden(&self) -> usize {
        self.kappa.len()
    }

    pub fn dim(&self) -> usize {
        self.omega.ncols()
    }

    pub fn psi(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        for j in 0..self.hidden() {
            let a = sigmoid(dot(self.omega.row(j), x) + self.kappa[j]) * self.delta[j];
            for (gi, &w) in g.iter_mut().zip(self.omega.row(j)) {
                *gi += a * w;
            }
        }
        g
    }

    pub fn zero_grads(&self) -> NetParams {
        NetParams {
            omega: Matrix::zeros(self.hidden(), self.dim()),
            kappa: vec![0.0; self.hidden()],
            delta: vec![0.0; self.hidden()],
        }
    }

    /// Accumulates d<u, psi(x)>/dparams into `grads` for an adjoint `u`.
    pub fn accumulate_adjoint(&self, x: &[f64], u: &[f64], grads: &mut NetParams) {
        for j in 0..self.hidden() {
            let wj = self.omega.row(j);
            let a = dot(wj, x) + self.kappa[j];
            let s = sigmoid(a);
            let sp = s * (1.0 - s);
            let wu = dot(wj, u);
            grads.delta[j] += s * wu;
            grads.kappa[j] += self.delta[j] * sp * wu;
            let c1 = self.delta[j] * sp * wu;
            let c2 = self.delta[j] * s;
            for c in 0..self.dim() {
                grads.omega[(j, c)] += c1 * x[c] + c2 * u[c];
            }
        }
    }

    /// Gradient step with nonnegativity projection on delta.
    pub fn step(&mut self, grads: &NetParams, lr: f64) {
        for j in 0..self.hidden() {
            for c in 0..self.dim() {
                self.omega[(j, c)] -= lr * grads.omega[(j, c)];
            }
            self.kappa[j] -= lr * grads.kappa[j];
            self.delta[j] = (self.delta[j] - lr * grads.delta[j]).max(0.0);
        }
    }
}

/// Transport loss sum_ij Pi_ij ||psi(z_i) - psi(z'_j) + grad B(z'_j)||^2 for a
/// fixed coupling, together with its parameter gradient.
pub(crate) fn coupling_loss_and_grads(
    params: &NetParams,
    plan: &[Vec<f64>],
    src_points: &[Vec<f64>],
    tgt_points: &[Vec<f64>],
    tgt_benefit_grads: &[Vec<f64>],
) -> (f64, NetParams) {
    let d = params.dim();
    let psi_src: Vec<Vec<f64>> = src_points.iter().map(|p| params.psi(p)).collect();
    let psi_tgt: Vec<Vec<f64>> = tgt_points.iter().map(|p| params.psi(p)).collect();
    let mut loss = 0.0;
    let mut adj_src = vec![vec![0.0_f64; d]; src_points.len()];
    let mut adj_tgt = vec![vec![0.0_f64; d]; tgt_points.len()];
    for (i, row) in plan.iter().enumerate() {
        for (j, &w) in row.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            let mut sq = 0.0;
            for c in 0..d {
                let r = psi_src[i][c] - psi_tgt[j][c] + tgt_benefit_grads[j][c];
                sq += r * r;
                adj_src[i][c] += 2.0 * w * r;
                adj_tgt[j][c] -= 2.0 * w * r;
            }
            loss += w * sq;
        }
    }
    let mut grads = params.zero_grads();
    for (x, u) in src_points.iter().zip(&adj_src) {
        params.accumulate_adjoint(x, u, &mut grads);
    }
    for (x, u) in tgt_points.iter().zip(&adj_tgt) {
        params.accumulate_adjoint(x, u, &mut grads);
    }
    (loss, grads)
}

fn refresh_coupling(
    params: &NetParams,
    ex_ante: &EmpiricalMeasure,
    ex_post: &EmpiricalMeasure,
    benefit_grads: &[Vec<f64>],
    cap: usize,
) -> Result<Coupling> {
    let push_src = crate::measures::pushforward(ex_ante, |z| params.psi(z))?;
    let push_tgt = {
        let pts: Vec<Vec<f64>> = ex_post
            .points()
            .iter()
            .zip(benefit_grads)
            .map(|(p, b)| {
                let psi = params.psi(p);
                psi.iter().zip(b).map(|(a, g)| a - g).collect()
            })
            .collect();
        EmpiricalMeasure::new(pts, ex_post.weights().to_vec())?
    };
    exact_coupling_with_cap(&push_src, &push_tgt, cap)
}

/// Fits the convex-net potential on one ex-ante / ex-post pair.
pub fn fit_convex_net(
    ex_ante: &EmpiricalMeasure,
    ex_post: &EmpiricalMeasure,
    benefit: &BenefitSpec,
    cfg: &NetConfig,
) -> Result<ConvexNetFit> {
    if ex_ante.dim() != ex_post.dim() || benefit.dim() != ex_ante.dim() {
        return Err(Error::Shape("ex-ante, ex-post and benefit dimensions must agree".into()));
    }
    if cfg.hidden == 0 {
        return Err(Error::Argument("need at least one hidden unit".into()));
    }
    benefit.validate()?;
    let benefit_grads: Vec<Vec<f64>> = ex_post
        .points()
        .iter()
        .map(|p| benefit.grad(p))
        .collect::<Result<_>>()?;

    let mut params = NetParams::init(cfg.hidden, ex_ante.dim(), cfg.seed);
    let mut trace = Vec::new();
    let mut initial_loss = None;
    let refresh = cfg.refresh_every.max(1);

    let mut coupling = refresh_coupling(&params, ex_ante, ex_post, &benefit_grads, cfg.exact_cap)?;
    for epoch in 0..cfg.epochs {
        if epoch > 0 && epoch % refresh == 0 {
            coupling = refresh_coupling(&params, ex_ante, ex_post, &benefit_grads, cfg.exact_cap)?;
        }
        let (loss, grads) = coupling_loss_and_grads(
            &params,
            coupling.plan(),
            ex_ante.points(),
            ex_post.points(),
            &benefit_grads,
        );
        if epoch % refresh == 0 {
            trace.push(loss);
        }
        let init = *initial_loss.get_or_insert(loss.max(1e-12));
        if !loss.is_finite() || loss > 10.0 * init {
            return Err(Error::LearningRate(format!(
                "net training diverged (loss {loss:.3e} vs initial {init:.3e}); lower lr"
            )));
        }
        params.step(&grads, cfg.lr);
    }
    coupling = refresh_coupling(&params, ex_ante, ex_post, &benefit_grads, cfg.exact_cap)?;
    let (final_loss, _) = coupling_loss_and_grads(
        &params,
        coupling.plan(),
        ex_ante.points(),
        ex_post.points(),
        &benefit_grads,
    );
    trace.push(final_loss);
    Ok(ConvexNetFit { potential: params.to_potential()?, loss_trace: trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::RootExp;

    #[test]
    fn analytic_grads_match_finite_differences() {
        let mut rng = Rng::seed_from_u64(31);
        let d = 3;
        let h = 4;
        let params = NetParams::init(h, d, 5);
        let n = 6;
        let src: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.next_f64() * 2.0 - 1.0).collect())
            .collect();
        let tgt: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.next_f64() * 2.0 + 0.5).collect())
            .collect();
        let bg: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.next_f64() * 0.5).collect())
            .collect();
        let plan: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 / n as f64 } else { 0.0 }).collect())
            .collect();

        let loss_of = |p: &NetParams| coupling_loss_and_grads(p, &plan, &src, &tgt, &bg).0;
        let (_, grads) = coupling_loss_and_grads(&params, &plan, &src, &tgt, &bg);

        let h_step = 1e-5;
        let rel = |a: f64, fd: f64| (a - fd).abs() / fd.abs().max(1e-6);
        for j in 0..h {
            for c in 0..d {
                let mut plus = params.clone();
                plus.omega[(j, c)] += h_step;
                let mut minus = params.clone();
                minus.omega[(j, c)] -= h_step;
                let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h_step);
                assert!(rel(grads.omega[(j, c)], fd) < 1e-4, "omega ({j},{c})");
            }
            let mut plus = params.clone();
            plus.kappa[j] += h_step;
            let mut minus = params.clone();
            minus.kappa[j] -= h_step;
            let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h_step);
            assert!(rel(grads.kappa[j], fd) < 1e-4, "kappa {j}");

            let mut plus = params.clone();
            plus.delta[j] += h_step;
            let mut minus = params.clone();
            minus.delta[j] -= h_step;
            let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h_step);
            assert!(rel(grads.delta[j], fd) < 1e-4, "delta {j}");
        }
    }

    #[test]
    fn training_reduces_loss_on_synthetic_world() {
        use crate::agents::{respond_measure, BenefitSpec};
        use crate::potentials::{PotentialModel, QuadraticPotential};

        let d = 2;
        let truth = PotentialModel::Quadratic(
            QuadraticPotential::from_matrix(&Matrix::scaled_identity(d, 0.1)).unwrap(),
        );
        let benefit = BenefitSpec::Power { theta: vec![0.4, 0.6], exponent: RootExp::Half };
        let ex_ante =
            crate::measures::sample_gaussian(&[0.0; 2], &Matrix::identity(2), 80, 11).unwrap();
        let ex_post_src =
            crate::measures::sample_gaussian(&[0.0; 2], &Matrix::identity(2), 80, 12).unwrap();
        let ex_post = respond_measure(&truth, &benefit, &ex_post_src).unwrap();

        let cfg = NetConfig { hidden: 4, seed: 3, lr: 5e-2, epochs: 200, ..Default::default() };
        let fit = fit_convex_net(&ex_ante, &ex_post, &benefit, &cfg).unwrap();
        let first = fit.loss_trace[0];
        let last = *fit.loss_trace.last().unwrap();
        assert!(last < first * 0.8, "loss did not improve: {first} -> {last}");
        assert!(fit.potential.delta().iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn divergent_lr_is_reported() {
        let ex_ante = crate::measures::sample_gaussian(&[0.0], &Matrix::identity(1), 30, 1).unwrap();
        let ex_post =
            crate::measures::sample_gaussian(&[4.0], &Matrix::identity(1), 30, 2).unwrap();
        let benefit = BenefitSpec::Power { theta: vec![1.0], exponent: RootExp::Half };
        let cfg = NetConfig { hidden: 3, seed: 0, lr: 1e6, epochs: 100, ..Default::default() };
        let err = fit_convex_net(&ex_ante, &ex_post, &benefit, &cfg);
        assert!(matches!(err, Err(Error::LearningRate(_))), "got {err:?}");
    }
}
