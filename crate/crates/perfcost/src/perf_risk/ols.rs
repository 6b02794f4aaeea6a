//! Strategic OLS closed forms: the exact performative risk of a linear
//! predictor under quadratic agent costs, and the cost of misspecifying the
//! agents' cost matrix as the identity.

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::rng::Rng;

/// Ground truth of the strategic OLS world: Y = X' theta_star + eps,
/// X ~ N(0, I), eps ~ N(0, sigma^2), quadratic agent cost with matrix M.
#[derive(Debug, Clone)]
pub struct OlsWorld {
    theta_star: Vec<f64>,
    m: Matrix,
    m_inv: Matrix,
    sigma: f64,
}

impl OlsWorld {
    pub fn new(theta_star: Vec<f64>, m: Matrix, sigma: f64) -> Result<Self> {
        if sigma <= 0.0 || !sigma.is_finite() {
            return Err(Error::Argument("noise sigma must be positive".into()));
        }
        if m.nrows() != theta_star.len() {
            return Err(Error::Shape("M and theta_star dimensions differ".into()));
        }
        // PD check through Cholesky.
        m.symmetrize().cholesky(1e-12)?;
        let m_inv = m.inverse()?;
        Ok(OlsWorld { theta_star, m, m_inv, sigma })
    }

    pub fn dim(&self) -> usize {
        self.theta_star.len()
    }

    pub fn theta_star(&self) -> &[f64] {
        &self.theta_star
    }

    pub fn m(&self) -> &Matrix {
        &self.m
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// Exact performative risk sigma^2 + ||theta - theta*||^2 + (theta' M^{-1} theta)^2.
pub fn strategic_ols_pr(theta: &[f64], world: &OlsWorld) -> Result<f64> {
    if theta.len() != world.dim() {
        return Err(Error::Shape("theta dimension mismatch".into()));
    }
    let diff_sq: f64 = theta
        .iter()
        .zip(&world.theta_star)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let q = dot(theta, &world.m_inv.matvec(theta));
    Ok(world.sigma * world.sigma + diff_sq + q * q)
}

/// Monte Carlo estimate of the same risk by simulating responding agents;
/// returns (mean, standard error).
pub fn monte_carlo_ols_pr(
    theta: &[f64],
    world: &OlsWorld,
    n: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if theta.len() != world.dim() {
        return Err(Error::Shape("theta dimension mismatch".into()));
    }
    let d = world.dim();
    let shift = world.m_inv.matvec(theta);
    let mut rng = Rng::seed_from_u64(seed);
    let mut x = vec![0.0; d];
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n {
        rng.fill_standard_normal(&mut x);
        let eps = rng.next_normal_pair().0 * world.sigma;
        let y = dot(&x, &world.theta_star) + eps;
        // agents move x -> x + M^{-1} theta; Y stays put
        let pred: f64 = theta
            .iter()
            .zip(x.iter().zip(&shift))
            .map(|(t, (xi, s))| t * (xi + s))
            .sum();
        let loss = (y - pred) * (y - pred);
        sum += loss;
        sum_sq += loss * loss;
    }
    let mean = sum / n as f64;
    let var = (sum_sq / n as f64 - mean * mean).max(0.0);
    Ok((mean, (var / n as f64).sqrt()))
}

/// Unique positive root of 2 t2 c^3 + c - 1 = 0 for t2 = ||theta*||^2 >= 0:
/// the scale at which a cost-misspecified learner shrinks theta*.
pub fn misspecified_opt_scale(theta_star_sq_norm: f64) -> Result<f64> {
    if !(theta_star_sq_norm >= 0.0) {
        return Err(Error::Argument("squared norm must be nonnegative".into()));
    }
    let t2 = theta_star_sq_norm;
    let f = |c: f64| 2.0 * t2 * c * c * c + c - 1.0;
    if t2 == 0.0 {
        return Ok(1.0);
    }
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        let v = f(mid);
        if v.abs() <= 1e-12 {
            return Ok(mid);
        }
        if v < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn pr_gradient(theta: &[f64], world: &OlsWorld) -> Vec<f64> {
    let q = dot(theta, &world.m_inv.matvec(theta));
    let minv_t = world.m_inv.matvec(theta);
    theta
        .iter()
        .zip(&world.theta_star)
        .zip(&minv_t)
        .map(|((t, ts), mt)| 2.0 * (t - ts) + 4.0 * q * mt)
        .collect()
}

/// Excess true performative risk of deploying the misspecified optimum
/// c*theta* instead of the (numerically searched) performative optimum.
pub fn ols_regret_of_misspecification(world: &OlsWorld) -> Result<f64> {
    let t2: f64 = world.theta_star.iter().map(|v| v * v).sum();
    let c = misspecified_opt_scale(t2)?;
    let theta_hat: Vec<f64> = world.theta_star.iter().map(|v| c * v).collect();
    let pr_hat = strategic_ols_pr(&theta_hat, world)?;

    // Dense scan along the theta* ray, then gradient-descent refinement.
    let mut best = pr_hat;
    let mut best_theta = theta_hat.clone();
    for k in 0..=300 {
        let t = 1.5 * k as f64 / 300.0;
        let cand: Vec<f64> = world.theta_star.iter().map(|v| t * v).collect();
        let pr = strategic_ols_pr(&cand, world)?;
        if pr < best {
            best = pr;
            best_theta = cand;
        }
    }
    let mut theta = best_theta;
    let mut pr = best;
    for _ in 0..500 {
        let g = pr_gradient(&theta, world);
        let mut step = 0.1;
        let mut moved = false;
        for _ in 0..40 {
            let cand: Vec<f64> = theta.iter().zip(&g).map(|(t, gi)| t - step * gi).collect();
            let pc = strategic_ols_pr(&cand, world)?;
            if pc < pr - 1e-15 {
                theta = cand;
                pr = pc;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    Ok((pr_hat - pr).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world(theta: Vec<f64>, m: Matrix, sigma: f64) -> OlsWorld {
        OlsWorld::new(theta, m, sigma).unwrap()
    }

    #[test]
    fn closed_form_examples() {
        let w = world(vec![1.0, 0.0], Matrix::identity(2), 1.0);
        // theta = theta* = e1, M = I, sigma = 1: 1 + 0 + 1 = 2
        assert!((strategic_ols_pr(&[1.0, 0.0], &w).unwrap() - 2.0).abs() < 1e-12);
        // theta = 0: sigma^2 + ||theta*||^2
        assert!((strategic_ols_pr(&[0.0, 0.0], &w).unwrap() - 2.0).abs() < 1e-12);
        let w2 = world(vec![2.0, 1.0], Matrix::identity(2), 0.5);
        assert!((strategic_ols_pr(&[0.0, 0.0], &w2).unwrap() - (0.25 + 5.0)).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_agrees_with_formula() {
        let mut rng = Rng::seed_from_u64(50);
        for trial in 0..5 {
            let d = 2 + (trial % 2);
            let theta_star: Vec<f64> = (0..d).map(|_| rng.next_f64() * 2.0 - 1.0).collect();
            let theta: Vec<f64> = (0..d).map(|_| rng.next_f64() * 2.0 - 1.0).collect();
            let m = Matrix::diag(&(0..d).map(|_| 0.2 + rng.next_f64()).collect::<Vec<_>>());
            let sigma = 0.3 + rng.next_f64();
            let w = world(theta_star, m, sigma);
            let exact = strategic_ols_pr(&theta, &w).unwrap();
            let (mc, se) = monte_carlo_ols_pr(&theta, &w, 100_000, 60 + trial as u64).unwrap();
            assert!(
                (mc - exact).abs() <= 3.0 * se,
                "mc {mc} vs exact {exact} (3se {})",
                3.0 * se
            );
        }
    }

    #[test]
    fn opt_scale_examples() {
        assert_eq!(misspecified_opt_scale(0.0).unwrap(), 1.0);
        // bisection oracle on 2c^3 + c - 1
        let c1 = misspecified_opt_scale(1.0).unwrap();
        assert!((2.0 * c1.powi(3) + c1 - 1.0).abs() <= 1e-12);
        assert!((c1 - 0.58975).abs() < 1e-4, "c1 {c1}");
        // 8c^3 + c - 1
        let c4 = misspecified_opt_scale(4.0).unwrap();
        assert!((8.0 * c4.powi(3) + c4 - 1.0).abs() <= 1e-12);
        assert!((c4 - 0.4175).abs() < 1e-3, "c4 {c4}");
    }

    #[test]
    fn opt_scale_is_in_unit_interval() {
        for t2 in [0.0, 0.1, 1.0, 10.0, 1e4] {
            let c = misspecified_opt_scale(t2).unwrap();
            assert!(c > 0.0 && c <= 1.0, "c {c} for t2 {t2}");
        }
    }

    #[test]
    fn regret_nonnegative_and_grows_as_costs_shrink() {
        let theta = vec![1.0, 0.0];
        let r1 = ols_regret_of_misspecification(&world(
            theta.clone(),
            Matrix::scaled_identity(2, 1.0),
            1.0,
        ))
        .unwrap();
        let r01 = ols_regret_of_misspecification(&world(
            theta.clone(),
            Matrix::scaled_identity(2, 0.1),
            1.0,
        ))
        .unwrap();
        let r001 = ols_regret_of_misspecification(&world(
            theta,
            Matrix::scaled_identity(2, 0.01),
            1.0,
        ))
        .unwrap();
        assert!(r1 >= 0.0);
        assert!(r01 > r1, "{r01} vs {r1}");
        assert!(r001 > r01, "{r001} vs {r01}");
    }

    #[test]
    fn c_minimizes_the_misspecified_risk_along_the_ray() {
        // grid scan of sigma^2 + (c-1)^2 t2 + c^4 t2^2
        for t2 in [0.5, 1.0, 4.0] {
            let c_star = misspecified_opt_scale(t2).unwrap();
            let f = |c: f64| (c - 1.0) * (c - 1.0) * t2 + c.powi(4) * t2 * t2;
            let mut best = (f64::INFINITY, 0.0);
            for k in 0..=2000 {
                let c = k as f64 / 2000.0;
                let v = f(c);
                if v < best.0 {
                    best = (v, c);
                }
            }
            assert!((c_star - best.1).abs() < 1e-3, "c {c_star} vs grid {}", best.1);
        }
    }
}
