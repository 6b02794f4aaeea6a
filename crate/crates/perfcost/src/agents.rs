//! Strategic agent simulation: benefit families B and the utility-maximizing
//! response argmax_z' B(z') - c(z, z') under a Bregman cost.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm2, Matrix};
use crate::measures::{EmpiricalMeasure, try_pushforward};
use crate::potentials::{grad_potential, PotentialModel};

/// Coordinates whose benefit term is active are clipped to at least this
/// value before power/log gradients are evaluated.
pub const DOMAIN_FLOOR: f64 = 1e-9;

/// First-order residual required of every returned response.
pub const FOC_TOL: f64 = 1e-8;

/// Widest bracket the scalar response search will expand to.
const SEARCH_RADIUS: f64 = 1e6;

/// Root exponent for the power benefit family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RootExp {
    #[serde(rename = "1/2")]
    Half,
    #[serde(rename = "1/3")]
    Third,
}

impl RootExp {
    pub fn as_f64(self) -> f64 {
        match self {
            RootExp::Half => 0.5,
            RootExp::Third => 1.0 / 3.0,
        }
    }
}

/// Parametric benefit families. Power and Log act on the positive orthant
/// (coordinates with a zero coefficient are unconstrained).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum BenefitSpec {
    /// B(z) = theta' z
    Linear { theta: Vec<f64> },
    /// B(x) = |beta|' x, the sign-folded linear benefit induced by a
    /// published classifier slope.
    AbsLinear { beta: Vec<f64> },
    /// B(x) = sum_j theta_j x_j^p, theta_j >= 0, p in {1/2, 1/3}
    Power { theta: Vec<f64>, exponent: RootExp },
    /// B(x) = sum_j theta_j log x_j, theta_j >= 0
    Log { theta: Vec<f64> },
}

impl BenefitSpec {
    pub fn dim(&self) -> usize {
        match self {
            BenefitSpec::Linear { theta } | BenefitSpec::Power { theta, .. } | BenefitSpec::Log { theta } => {
                theta.len()
            }
            BenefitSpec::AbsLinear { beta } => beta.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let params = self.params();
        if params.is_empty() {
            return Err(Error::Argument("benefit needs at least one coefficient".into()));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("non-finite benefit coefficient".into()));
        }
        match self {
            BenefitSpec::Power { theta, .. } | BenefitSpec::Log { theta } => {
                if theta.iter().any(|&t| t < 0.0) {
                    return Err(Error::Argument(
                        "power/log benefit coefficients must be nonnegative".into(),
                    ));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn params(&self) -> &[f64] {
        match self {
            BenefitSpec::Linear { theta } | BenefitSpec::Power { theta, .. } | BenefitSpec::Log { theta } => theta,
            BenefitSpec::AbsLinear { beta } => beta,
        }
    }

    /// Same family, different coefficient vector.
    pub fn with_params(&self, params: Vec<f64>) -> Result<BenefitSpec> {
        if params.len() != self.dim() {
            return Err(Error::Shape(format!(
                "expected {} coefficients, got {}",
                self.dim(),
                params.len()
            )));
        }
        let b = match self {
            BenefitSpec::Linear { .. } => BenefitSpec::Linear { theta: params },
            BenefitSpec::AbsLinear { .. } => BenefitSpec::AbsLinear { beta: params },
            BenefitSpec::Power { exponent, .. } => {
                BenefitSpec::Power { theta: params, exponent: *exponent }
            }
            BenefitSpec::Log { .. } => BenefitSpec::Log { theta: params },
        };
        b.validate()?;
        Ok(b)
    }

    /// Coefficients scaled by `c` (the "deploy c*theta" probe).
    pub fn scaled(&self, c: f64) -> Result<BenefitSpec> {
        self.with_params(self.params().iter().map(|&t| c * t).collect())
    }

    /// For Linear/AbsLinear the gradient does not depend on the point.
    pub fn constant_grad(&self) -> Option<Vec<f64>> {
        match self {
            BenefitSpec::Linear { theta } => Some(theta.clone()),
            BenefitSpec::AbsLinear { beta } => Some(beta.iter().map(|b| b.abs()).collect()),
            _ => None,
        }
    }

    fn domain_check(&self, z: &[f64]) -> Result<()> {
        match self {
            BenefitSpec::Power { theta, .. } | BenefitSpec::Log { theta } => {
                for (j, (&t, &x)) in theta.iter().zip(z).enumerate() {
                    if t != 0.0 && x <= 0.0 {
                        return Err(Error::Domain(format!(
                            "coordinate {j} must be positive for this benefit (got {x})"
                        )));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn value(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.dim() {
            return Err(Error::Shape(format!(
                "point dimension {} vs benefit dimension {}",
                z.len(),
                self.dim()
            )));
        }
        self.domain_check(z)?;
        Ok(match self {
            BenefitSpec::Linear { theta } => theta.iter().zip(z).map(|(t, x)| t * x).sum(),
            BenefitSpec::AbsLinear { beta } => beta.iter().zip(z).map(|(b, x)| b.abs() * x).sum(),
            BenefitSpec::Power { theta, exponent } => {
                let p = exponent.as_f64();
                theta
                    .iter()
                    .zip(z)
                    .map(|(&t, &x)| if t == 0.0 { 0.0 } else { t * x.powf(p) })
                    .sum()
            }
            BenefitSpec::Log { theta } => theta
                .iter()
                .zip(z)
                .map(|(&t, &x)| if t == 0.0 { 0.0 } else { t * x.ln() })
                .sum(),
        })
    }

    pub fn grad(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.dim() {
            return Err(Error::Shape(format!(
                "point dimension {} vs benefit dimension {}",
                z.len(),
                self.dim()
            )));
        }
        self.domain_check(z)?;
        Ok(match self {
            BenefitSpec::Linear { theta } => theta.clone(),
            BenefitSpec::AbsLinear { beta } => beta.iter().map(|b| b.abs()).collect(),
            BenefitSpec::Power { theta, exponent } => {
                let p = exponent.as_f64();
                theta
                    .iter()
                    .zip(z)
                    .map(|(&t, &x)| if t == 0.0 { 0.0 } else { p * t * x.powf(p - 1.0) })
                    .collect()
            }
            BenefitSpec::Log { theta } => theta
                .iter()
                .zip(z)
                .map(|(&t, &x)| if t == 0.0 { 0.0 } else { t / x })
                .collect(),
        })
    }

    /// Diagonal of the benefit Hessian (all families here are separable).
    fn second_diag(&self, z: &[f64]) -> Vec<f64> {
        match self {
            BenefitSpec::Linear { theta } => vec![0.0; theta.len()],
            BenefitSpec::AbsLinear { beta } => vec![0.0; beta.len()],
            BenefitSpec::Power { theta, exponent } => {
                let p = exponent.as_f64();
                theta
                    .iter()
                    .zip(z)
                    .map(|(&t, &x)| if t == 0.0 { 0.0 } else { p * (p - 1.0) * t * x.powf(p - 2.0) })
                    .collect()
            }
            BenefitSpec::Log { theta } => theta
                .iter()
                .zip(z)
                .map(|(&t, &x)| if t == 0.0 { 0.0 } else { -t / (x * x) })
                .collect(),
        }
    }

    /// Whether the benefit restricts coordinate `j` to the positive axis.
    fn needs_positive(&self, j: usize) -> bool {
        match self {
            BenefitSpec::Power { theta, .. } | BenefitSpec::Log { theta } => theta[j] != 0.0,
            _ => false,
        }
    }
}

/// Published linear predictor theta = (alpha, beta).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    pub alpha: f64,
    pub beta: Vec<f64>,
}

impl LinearClassifier {
    pub fn new(alpha: f64, beta: Vec<f64>) -> Result<Self> {
        if !alpha.is_finite() || beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::Argument("classifier parameters must be finite".into()));
        }
        Ok(LinearClassifier { alpha, beta })
    }

    pub fn zeros(dim: usize) -> Self {
        LinearClassifier { alpha: 0.0, beta: vec![0.0; dim] }
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        self.alpha + self.beta.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        let t = self.logit(x);
        if t >= 0.0 {
            1.0 / (1.0 + (-t).exp())
        } else {
            let e = t.exp();
            e / (1.0 + e)
        }
    }
}

/// Exact benefit gradient (free-function spelling of [`BenefitSpec::grad`]).
pub fn grad_benefit(b: &BenefitSpec, z: &[f64]) -> Result<Vec<f64>> {
    b.grad(z)
}

/// Scalar view of a potential's derivative along one coordinate, holding the
/// other coordinates fixed (valid for separable potentials only).
struct ScalarPotential<'a> {
    potential: &'a PotentialModel,
    coord: usize,
}

impl ScalarPotential<'_> {
    fn prime(&self, x: f64) -> f64 {
        match self.potential {
            PotentialModel::Quadratic(q) => q.matrix()[(self.coord, self.coord)] * x,
            PotentialModel::Isotonic1d(iso) => iso.eval(x),
            PotentialModel::ConvexNet(_) => unreachable!("convex net is not separable"),
        }
    }

    fn second(&self, x: f64) -> f64 {
        match self.potential {
            PotentialModel::Quadratic(q) => q.matrix()[(self.coord, self.coord)],
            PotentialModel::Isotonic1d(iso) => {
                // slope of the piecewise-linear derivative at x
                let k = iso.knots();
                let v = iso.values();
                if x <= k[0] || x >= k[k.len() - 1] {
                    return 0.0;
                }
                let idx = k.partition_point(|&t| t < x).max(1);
                (v[idx] - v[idx - 1]) / (k[idx] - k[idx - 1])
            }
            PotentialModel::ConvexNet(_) => unreachable!("convex net is not separable"),
        }
    }
}

fn is_diagonal(m: &Matrix) -> bool {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j && m[(i, j)].abs() > 1e-14 {
                return false;
            }
        }
    }
    true
}

/// Monotone scalar root solve for phi'(x) - target - B_j'(x) = 0 on a
/// geometrically expanded bracket, by bisection-safeguarded Newton.
fn solve_scalar_foc(
    phi: &ScalarPotential<'_>,
    benefit: &BenefitSpec,
    coord: usize,
    z: f64,
    target: f64,
) -> Result<f64> {
    let positive = benefit.needs_positive(coord);
    let bprime = |x: f64| -> f64 {
        let mut probe = vec![1.0; benefit.dim()];
        probe[coord] = x;
        benefit.grad(&probe).map(|g| g[coord]).unwrap_or(f64::NAN)
    };
    let bsecond = |x: f64| -> f64 {
        let mut probe = vec![1.0; benefit.dim()];
        probe[coord] = x;
        benefit.second_diag(&probe)[coord]
    };
    let f = |x: f64| phi.prime(x) - target - bprime(x);

    let mut lo = if positive { z.max(DOMAIN_FLOOR) } else { z };
    let flo = f(lo);
    if !flo.is_finite() {
        return Err(Error::Optimization(format!(
            "first-order condition not evaluable at coordinate {coord}"
        )));
    }
    if flo.abs() <= 1e-12 {
        return Ok(lo);
    }
    if flo > 0.0 {
        // Only reachable through the domain clip; the optimum sits at the floor.
        return Ok(lo);
    }
    let mut step = 1e-3 * (1.0 + z.abs());
    let mut hi = lo + step;
    let mut fhi = f(hi);
    while fhi < 0.0 {
        step *= 2.0;
        hi += step;
        fhi = f(hi);
        if hi - lo > SEARCH_RADIUS {
            return Err(Error::Optimization(format!(
                "no bracket for the best response within {SEARCH_RADIUS:.0} of the start (coordinate {coord})"
            )));
        }
    }
    // Newton from the midpoint with a bisection safeguard; f is
    // non-decreasing, so the bracket stays valid.
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let fx = f(x);
        if fx.abs() <= 1e-12 {
            return Ok(x);
        }
        if fx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let slope = phi.second(x) - bsecond(x);
        let newton = if slope > 1e-300 { x - fx / slope } else { f64::NAN };
        x = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo < 1e-15 * (1.0 + x.abs()) {
            break;
        }
    }
    Ok(x)
}

/// Damped Newton on the convex objective phi(x) - B(x) - c'x for the
/// non-separable case, with Armijo backtracking and positive-orthant clipping
/// where the benefit requires it.
fn solve_multivariate_foc(
    p: &PotentialModel,
    benefit: &BenefitSpec,
    z: &[f64],
    target: &[f64],
) -> Result<Vec<f64>> {
    let d = z.len();
    let clip = |x: &mut Vec<f64>| {
        for j in 0..d {
            if benefit.needs_positive(j) && x[j] < DOMAIN_FLOOR {
                x[j] = DOMAIN_FLOOR;
            }
        }
    };
    let objective = |x: &[f64]| -> f64 {
        let phi = match p {
            PotentialModel::Quadratic(q) => q.phi(x),
            PotentialModel::ConvexNet(n) => n.phi(x),
            PotentialModel::Isotonic1d(_) => unreachable!("1d goes through the scalar path"),
        };
        phi - benefit.value(x).unwrap_or(f64::INFINITY)
            - target.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    };

    let mut x: Vec<f64> = z.to_vec();
    for j in 0..d {
        if benefit.needs_positive(j) {
            x[j] = x[j].max(0.1);
        }
    }
    for _iter in 0..200 {
        let gphi = grad_potential(p, &x)?;
        let gb = benefit.grad(&x)?;
        let grad: Vec<f64> = (0..d).map(|j| gphi[j] - gb[j] - target[j]).collect();
        let res = norm2(&grad);
        if res <= FOC_TOL * 0.1 {
            return Ok(x);
        }
        let mut hess = match p {
            PotentialModel::Quadratic(q) => q.matrix().clone(),
            PotentialModel::ConvexNet(n) => n.hessian(&x),
            PotentialModel::Isotonic1d(_) => unreachable!(),
        };
        for (j, b2) in benefit.second_diag(&x).into_iter().enumerate() {
            hess[(j, j)] -= b2; // benefit is concave, so this adds curvature
            hess[(j, j)] += 1e-10;
        }
        let dir = match hess.solve(&grad) {
            Ok(d) => d,
            Err(_) => grad.clone(),
        };
        let f0 = objective(&x);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let mut cand: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi - t * di).collect();
            clip(&mut cand);
            let fc = objective(&cand);
            if fc.is_finite() && fc <= f0 - 1e-4 * t * res * res / (1.0 + res) {
                x = cand;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(Error::Optimization(
                "best-response line search stalled before reaching the residual tolerance".into(),
            ));
        }
    }
    let gphi = grad_potential(p, &x)?;
    let gb = benefit.grad(&x)?;
    let res = norm2(&(0..d).map(|j| gphi[j] - gb[j] - target[j]).collect::<Vec<_>>());
    if res <= FOC_TOL {
        Ok(x)
    } else {
        Err(Error::Optimization(format!(
            "best response did not reach first-order tolerance (residual {res:.3e})"
        )))
    }
}

/// Utility-maximizing response: argmax_z' B(z') - c_phi(z, z').
///
/// Closed form where available (quadratic potential with a constant-gradient
/// benefit); otherwise per-coordinate safeguarded Newton when the first-order
/// system separates, and damped Newton on the convex objective when it does
/// not.
pub fn best_response(p: &PotentialModel, b: &BenefitSpec, z: &[f64]) -> Result<Vec<f64>> {
    if z.len() != p.dim() || b.dim() != p.dim() {
        return Err(Error::Shape(format!(
            "dimensions disagree: point {}, potential {}, benefit {}",
            z.len(),
            p.dim(),
            b.dim()
        )));
    }
    if let (PotentialModel::Quadratic(q), Some(c)) = (p, b.constant_grad()) {
        let shift = q.matrix_inv().matvec(&c);
        return Ok(z.iter().zip(&shift).map(|(zi, s)| zi + s).collect());
    }
    let separable = match p {
        PotentialModel::Isotonic1d(_) => true,
        PotentialModel::Quadratic(q) => is_diagonal(q.matrix()),
        PotentialModel::ConvexNet(_) => false,
    };
    if separable {
        let gz = grad_potential(p, z)?;
        let mut out = vec![0.0; z.len()];
        for j in 0..z.len() {
            let scalar = ScalarPotential { potential: p, coord: j };
            out[j] = solve_scalar_foc(&scalar, b, j, z[j], gz[j])?;
        }
        Ok(out)
    } else {
        let gz = grad_potential(p, z)?;
        solve_multivariate_foc(p, b, z, &gz)
    }
}

/// Pushes a whole measure through [`best_response`]; atoms are solved in
/// parallel and reassembled in input order.
pub fn respond_measure(
    p: &PotentialModel,
    b: &BenefitSpec,
    m: &EmpiricalMeasure,
) -> Result<EmpiricalMeasure> {
    if let (PotentialModel::Quadratic(q), Some(c)) = (p, b.constant_grad()) {
        let shift = q.matrix_inv().matvec(&c);
        return try_pushforward(m, |z| {
            Ok(z.iter().zip(&shift).map(|(zi, s)| zi + s).collect())
        });
    }
    let responded: Result<Vec<Vec<f64>>> = m
        .points()
        .par_iter()
        .map(|z| best_response(p, b, z))
        .collect();
    let points = responded?;
    EmpiricalMeasure::new(points, m.weights().to_vec())
}
