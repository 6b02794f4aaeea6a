//! Response maps assembled from an estimated potential and a benefit: the
//! forward direction is the agent's best response, the inverse recovers the
//! pre-response point from the same first-order condition.

use crate::agents::{best_response, BenefitSpec};
use crate::error::{Error, Result};
use crate::linalg::norm2;
use crate::potentials::{grad_potential, IsotonicDerivative1D, PotentialModel};

/// Estimated agent response map for a given deployment's benefit.
#[derive(Debug, Clone)]
pub struct ResponseMap {
    potential: PotentialModel,
    benefit: BenefitSpec,
}

/// Plugs an estimated potential into the first-order condition at the target
/// benefit coefficients.
pub fn estimate_response_map(
    potential: &PotentialModel,
    base_benefit: &BenefitSpec,
    target_params: &[f64],
) -> Result<ResponseMap> {
    let benefit = base_benefit.with_params(target_params.to_vec())?;
    if benefit.dim() != potential.dim() {
        return Err(Error::Shape(format!(
            "benefit dimension {} vs potential dimension {}",
            benefit.dim(),
            potential.dim()
        )));
    }
    Ok(ResponseMap { potential: potential.clone(), benefit })
}

impl ResponseMap {
    pub fn benefit(&self) -> &BenefitSpec {
        &self.benefit
    }

    pub fn potential(&self) -> &PotentialModel {
        &self.potential
    }

    /// T(z): the best response under the estimated cost.
    pub fn forward(&self, z: &[f64]) -> Result<Vec<f64>> {
        best_response(&self.potential, &self.benefit, z)
    }

    /// T^{-1}(z'): solves grad phi(z) = grad phi(z') - grad B(z').
    pub fn inverse(&self, z_post: &[f64]) -> Result<Vec<f64>> {
        if let (PotentialModel::Quadratic(q), Some(c)) = (&self.potential, self.benefit.constant_grad()) {
            let shift = q.matrix_inv().matvec(&c);
            return Ok(z_post.iter().zip(&shift).map(|(z, s)| z - s).collect());
        }
        let gp = grad_potential(&self.potential, z_post)?;
        let gb = self.benefit.grad(z_post)?;
        let target: Vec<f64> = gp.iter().zip(&gb).map(|(a, b)| a - b).collect();
        invert_potential_gradient(&self.potential, &target)
    }
}

/// Solves grad phi(z) = target for each potential family.
pub fn invert_potential_gradient(p: &PotentialModel, target: &[f64]) -> Result<Vec<f64>> {
    match p {
        PotentialModel::Quadratic(q) => Ok(q.matrix_inv().matvec(target)),
        PotentialModel::Isotonic1d(iso) => Ok(vec![invert_isotonic(iso, target[0])?]),
        PotentialModel::ConvexNet(net) => {
            // Minimize phi(z) - target' z by damped Newton with a ridge.
            let d = net.dim();
            let mut z = vec![0.0_f64; d];
            for _ in 0..300 {
                let g = net.grad(&z);
                let grad: Vec<f64> = g.iter().zip(target).map(|(a, b)| a - b).collect();
                let res = norm2(&grad);
                if res <= 1e-9 {
                    return Ok(z);
                }
                let mut h = net.hessian(&z);
                for i in 0..d {
                    h[(i, i)] += 1e-9;
                }
                let dir = h.solve(&grad).unwrap_or_else(|_| grad.clone());
                let obj = |x: &[f64]| {
                    net.phi(x) - target.iter().zip(x).map(|(t, v)| t * v).sum::<f64>()
                };
                let f0 = obj(&z);
                let mut t = 1.0;
                let mut moved = false;
                for _ in 0..60 {
                    let cand: Vec<f64> = z.iter().zip(&dir).map(|(zi, di)| zi - t * di).collect();
                    if obj(&cand) < f0 - 1e-12 {
                        z = cand;
                        moved = true;
                        break;
                    }
                    t *= 0.5;
                }
                if !moved || norm2(&z) > 1e8 {
                    return Err(Error::Inversion(
                        "gradient target outside the range of the network gradient".into(),
                    ));
                }
            }
            let g = net.grad(&z);
            let res = norm2(&g.iter().zip(target).map(|(a, b)| a - b).collect::<Vec<_>>());
            if res <= 1e-8 {
                Ok(z)
            } else {
                Err(Error::Inversion(format!(
                    "net gradient inversion stalled at residual {res:.3e}"
                )))
            }
        }
    }
}

/// Inverts a non-decreasing piecewise-linear derivative; flat stretches
/// resolve to their leftmost point, values outside the range error out.
fn invert_isotonic(iso: &IsotonicDerivative1D, c: f64) -> Result<f64> {
    let k = iso.knots();
    let v = iso.values();
    let last = v.len() - 1;
    let tol = 1e-9 * (1.0 + v[last].abs().max(v[0].abs()));
    if c < v[0] - tol || c > v[last] + tol {
        return Err(Error::Inversion(format!(
            "value {c} outside the monotone range [{}, {}]",
            v[0], v[last]
        )));
    }
    let c = c.clamp(v[0], v[last]);
    let idx = v.partition_point(|&x| x < c);
    if idx == 0 {
        return Ok(k[0]);
    }
    if v[idx] == v[idx - 1] {
        return Ok(k[idx]);
    }
    let w = (c - v[idx - 1]) / (v[idx] - v[idx - 1]);
    Ok(k[idx - 1] + w * (k[idx] - k[idx - 1]))
}
