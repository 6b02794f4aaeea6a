//! Repeated gradient descent baseline: retrain on freshly induced data each
//! round, differentiating through the loss only, never the distribution map.

use crate::agents::LinearClassifier;
use crate::error::{Error, Result};
use crate::rng::Rng;

use super::world::LabeledData;

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Runs RGD for `rounds` deployments. `sampler(theta, n, seed)` must return
/// a fresh labeled sample from the distribution induced by deploying
/// `theta`. Returns the trajectory theta_0, ..., theta_T.
pub fn rgd<F>(
    sampler: F,
    theta0: &LinearClassifier,
    eta: f64,
    rounds: usize,
    n: usize,
    seed: u64,
) -> Result<Vec<LinearClassifier>>
where
    F: Fn(&LinearClassifier, usize, u64) -> Result<LabeledData>,
{
    if eta <= 0.0 {
        return Err(Error::Argument("step size eta must be positive".into()));
    }
    let d = theta0.beta.len();
    let mut trajectory = vec![theta0.clone()];
    let mut theta = theta0.clone();
    for round in 0..rounds {
        let round_seed = Rng::derive(seed, round as u64).next_u64();
        let data = sampler(&theta, n, round_seed)?;
        if data.measure.dim() != d {
            return Err(Error::Shape("sampled data dimension mismatch".into()));
        }
        let m = data.len() as f64;
        let mut g_alpha = 0.0;
        let mut g_beta = vec![0.0; d];
        for (x, &y) in data.measure.points().iter().zip(&data.labels) {
            let p = sigmoid(theta.logit(x));
            let e = p - y;
            g_alpha += e / m;
            for j in 0..d {
                g_beta[j] += e * x[j] / m;
            }
        }
        theta.alpha -= eta * g_alpha;
        for j in 0..d {
            theta.beta[j] -= eta * g_beta[j];
        }
        let norm = theta.alpha.abs().max(
            theta
                .beta
                .iter()
                .fold(0.0_f64, |acc, b| acc.max(b.abs())),
        );
        if !norm.is_finite() || norm > 1e6 {
            return Err(Error::Divergence(format!(
                "RGD iterate exceeded 1e6 after round {round}; reduce eta"
            )));
        }
        trajectory.push(theta.clone());
    }
    Ok(trajectory)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::EmpiricalMeasure;

    fn stationary_sampler(seed_base: u64) -> impl Fn(&LinearClassifier, usize, u64) -> Result<LabeledData> {
        move |_theta: &LinearClassifier, n: usize, seed: u64| {
            let mut rng = Rng::seed_from_u64(seed_base ^ seed);
            let mut pts = Vec::new();
            let mut labels = Vec::new();
            for _ in 0..n {
                let x = vec![rng.next_normal_pair().0];
                let p = sigmoid(1.0 - 2.0 * x[0]);
                labels.push(if rng.next_f64() < p { 1.0 } else { 0.0 });
                pts.push(x);
            }
            LabeledData::new(EmpiricalMeasure::from_points(pts).unwrap(), labels)
        }
    }

    #[test]
    fn converges_on_a_stationary_world() {
        let sampler = stationary_sampler(42);
        let traj = rgd(&sampler, &LinearClassifier::zeros(1), 1.0, 400, 500, 7).unwrap();
        let last = traj.last().unwrap();
        assert!((last.alpha - 1.0).abs() < 0.25, "alpha {}", last.alpha);
        assert!((last.beta[0] + 2.0).abs() < 0.35, "beta {}", last.beta[0]);
    }

    #[test]
    fn trajectories_are_deterministic_in_seed() {
        let sampler = stationary_sampler(1);
        let a = rgd(&sampler, &LinearClassifier::zeros(1), 0.5, 30, 100, 3).unwrap();
        let b = rgd(&sampler, &LinearClassifier::zeros(1), 0.5, 30, 100, 3).unwrap();
        assert_eq!(a, b);
        let c = rgd(&sampler, &LinearClassifier::zeros(1), 0.5, 30, 100, 4).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn divergence_is_detected() {
        let sampler = stationary_sampler(2);
        let err = rgd(&sampler, &LinearClassifier::zeros(1), 1e7, 2000, 50, 0);
        assert!(matches!(err, Err(Error::Divergence(_))), "got {err:?}");
    }
}
