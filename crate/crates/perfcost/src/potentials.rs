//! Bregman potentials: quadratic, piecewise-linear isotonic derivative in
//! 1D, and input-convex single-hidden-layer network. Each family exposes
//! phi, its gradient, and the induced Bregman cost
//! c(y, z) = phi(z) - phi(y) - grad_phi(y)' (z - y).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};

/// Diagonal floor for the Cholesky parameterization of quadratic potentials.
pub const CHOL_DIAG_FLOOR: f64 = 1e-8;

/// phi(z) = 1/2 z' M z with M = L L' positive definite, stored through its
/// lower-triangular Cholesky factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "QuadraticRepr", into = "QuadraticRepr")]
pub struct QuadraticPotential {
    chol: Matrix,
    m: Matrix,
    m_inv: Matrix,
}

#[derive(Serialize, Deserialize)]
struct QuadraticRepr {
    chol: Matrix,
}

impl TryFrom<QuadraticRepr> for QuadraticPotential {
    type Error = String;
    fn try_from(r: QuadraticRepr) -> std::result::Result<Self, String> {
        QuadraticPotential::from_cholesky(r.chol).map_err(|e| e.to_string())
    }
}

impl From<QuadraticPotential> for QuadraticRepr {
    fn from(q: QuadraticPotential) -> Self {
        QuadraticRepr { chol: q.chol }
    }
}

impl QuadraticPotential {
    /// Builds from a symmetric positive definite matrix; fails if the
    /// Cholesky pivot drops below the diagonal floor.
    pub fn from_matrix(m: &Matrix) -> Result<Self> {
        let chol = m.symmetrize().cholesky(CHOL_DIAG_FLOOR)?;
        Self::from_cholesky(chol)
    }

    /// Builds from a symmetric matrix after projecting its spectrum onto
    /// [floor, inf); used by fitting loops that produce near-PD iterates.
    pub fn from_matrix_projected(m: &Matrix) -> Result<Self> {
        let clipped = m.psd_clip(CHOL_DIAG_FLOOR)?;
        let chol = clipped.cholesky(CHOL_DIAG_FLOOR * 0.5)?;
        Self::from_cholesky(chol)
    }

    /// Builds from a lower-triangular factor; diagonal entries are floored
    /// at 1e-8 in absolute value (sign-normalized to positive).
    pub fn from_cholesky(mut chol: Matrix) -> Result<Self> {
        if !chol.is_square() {
            return Err(Error::Shape("Cholesky factor must be square".into()));
        }
        let d = chol.nrows();
        for i in 0..d {
            for j in (i + 1)..d {
                if chol[(i, j)] != 0.0 {
                    return Err(Error::Argument("Cholesky factor must be lower triangular".into()));
                }
            }
            let v = chol[(i, i)];
            if !v.is_finite() {
                return Err(Error::Argument("non-finite Cholesky diagonal".into()));
            }
            chol[(i, i)] = v.abs().max(CHOL_DIAG_FLOOR);
        }
        if !chol.all_finite() {
            return Err(Error::Argument("non-finite Cholesky entry".into()));
        }
        let m = chol.matmul(&chol.transpose()).symmetrize();
        let m_inv = m.inverse()?;
        Ok(QuadraticPotential { chol, m, m_inv })
    }

    pub fn isotropic(dim: usize, sigma: f64) -> Result<Self> {
        Self::from_matrix(&Matrix::scaled_identity(dim, sigma))
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.m
    }

    pub fn matrix_inv(&self) -> &Matrix {
        &self.m_inv
    }

    pub fn cholesky_factor(&self) -> &Matrix {
        &self.chol
    }

    pub fn phi(&self, z: &[f64]) -> f64 {
        0.5 * dot(z, &self.m.matvec(z))
    }

    pub fn grad(&self, z: &[f64]) -> Vec<f64> {
        self.m.matvec(z)
    }

    /// Bregman cost through the M-only formula 1/2 (z-y)' M (z-y); exactly
    /// invariant to affine adjustments of the potential and symmetric in its
    /// arguments.
    pub fn cost(&self, y: &[f64], z: &[f64]) -> f64 {
        let delta: Vec<f64> = z.iter().zip(y).map(|(a, b)| a - b).collect();
        0.5 * dot(&delta, &self.m.matvec(&delta))
    }
}

/// Piecewise-linear non-decreasing derivative phi' on strictly increasing
/// knots, extended constantly outside the knot range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IsotonicRepr", into = "IsotonicRepr")]
pub struct IsotonicDerivative1D {
    knots: Vec<f64>,
    values: Vec<f64>,
    /// Antiderivative of phi' at each knot with anchor at the first knot.
    cumulative: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct IsotonicRepr {
    knots: Vec<f64>,
    values: Vec<f64>,
}

impl TryFrom<IsotonicRepr> for IsotonicDerivative1D {
    type Error = String;
    fn try_from(r: IsotonicRepr) -> std::result::Result<Self, String> {
        IsotonicDerivative1D::new(r.knots, r.values).map_err(|e| e.to_string())
    }
}

impl From<IsotonicDerivative1D> for IsotonicRepr {
    fn from(p: IsotonicDerivative1D) -> Self {
        IsotonicRepr { knots: p.knots, values: p.values }
    }
}

impl IsotonicDerivative1D {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.is_empty() || knots.len() != values.len() {
            return Err(Error::Shape("knots and values must be non-empty and equal length".into()));
        }
        if knots.iter().any(|v| !v.is_finite()) || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("non-finite knot or value".into()));
        }
        if knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Argument("knots must be strictly increasing".into()));
        }
        if values.windows(2).any(|w| w[0] > w[1] + 1e-12) {
            return Err(Error::Argument("values must be non-decreasing".into()));
        }
        let mut cumulative = vec![0.0; knots.len()];
        for k in 1..knots.len() {
            let h = knots[k] - knots[k - 1];
            cumulative[k] = cumulative[k - 1] + 0.5 * (values[k] + values[k - 1]) * h;
        }
        Ok(IsotonicDerivative1D { knots, values, cumulative })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// phi'(t): linear interpolation between knots, constant outside.
    pub fn eval(&self, t: f64) -> f64 {
        let k = &self.knots;
        let v = &self.values;
        if t <= k[0] {
            return v[0];
        }
        if t >= k[k.len() - 1] {
            return v[v.len() - 1];
        }
        let idx = match k.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(i) => return v[i],
            Err(i) => i,
        };
        let w = (t - k[idx - 1]) / (k[idx] - k[idx - 1]);
        v[idx - 1] + w * (v[idx] - v[idx - 1])
    }

    /// Antiderivative of phi' anchored at the first knot (closed form,
    /// piecewise quadratic).
    pub fn antiderivative(&self, t: f64) -> f64 {
        let k = &self.knots;
        let v = &self.values;
        let last = k.len() - 1;
        if t <= k[0] {
            return (t - k[0]) * v[0];
        }
        if t >= k[last] {
            return self.cumulative[last] + (t - k[last]) * v[last];
        }
        let idx = match k.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(i) => return self.cumulative[i],
            Err(i) => i,
        };
        let h = t - k[idx - 1];
        let val_t = self.eval(t);
        self.cumulative[idx - 1] + 0.5 * (v[idx - 1] + val_t) * h
    }

    /// Bregman cost c(y, z) = Int_y^z (phi'(t) - phi'(y)) dt.
    pub fn cost(&self, y: f64, z: f64) -> f64 {
        self.antiderivative(z) - self.antiderivative(y) - self.eval(y) * (z - y)
    }

    /// Mean of phi' over the knots; subtracting it fixes the additive
    /// degree of freedom when comparing estimates.
    pub fn mean_value(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// phi(x) anchored so phi(anchor) = 0, integrated from an isotonic
/// derivative.
#[derive(Debug, Clone)]
pub struct IntegratedPotential {
    derivative: IsotonicDerivative1D,
    anchor: f64,
    offset: f64,
}

/// Integrates an isotonic derivative into its convex potential with
/// phi(anchor) = 0.
pub fn integrate_isotonic(p: &IsotonicDerivative1D, anchor: f64) -> Result<IntegratedPotential> {
    if anchor < p.knots()[0] || anchor > p.knots()[p.knots().len() - 1] {
        return Err(Error::Argument(format!(
            "anchor {anchor} outside knot range [{}, {}]",
            p.knots()[0],
            p.knots()[p.knots().len() - 1]
        )));
    }
    let offset = p.antiderivative(anchor);
    Ok(IntegratedPotential { derivative: p.clone(), anchor, offset })
}

impl IntegratedPotential {
    pub fn eval(&self, t: f64) -> f64 {
        self.derivative.antiderivative(t) - self.offset
    }

    pub fn anchor(&self) -> f64 {
        self.anchor
    }
}

fn softplus(t: f64) -> f64 {
    if t > 30.0 {
        t
    } else if t < -30.0 {
        t.exp()
    } else {
        (1.0 + t.exp()).ln()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Input-convex single-hidden-layer network potential
/// phi(x) = sum_j delta_j softplus(omega_j' x + kappa_j) with delta_j >= 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConvexNetRepr", into = "ConvexNetRepr")]
pub struct ConvexNetPotential {
    omega: Matrix,
    kappa: Vec<f64>,
    delta: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ConvexNetRepr {
    omega: Matrix,
    kappa: Vec<f64>,
    delta: Vec<f64>,
}

impl TryFrom<ConvexNetRepr> for ConvexNetPotential {
    type Error = String;
    fn try_from(r: ConvexNetRepr) -> std::result::Result<Self, String> {
        ConvexNetPotential::new(r.omega, r.kappa, r.delta).map_err(|e| e.to_string())
    }
}

impl From<ConvexNetPotential> for ConvexNetRepr {
    fn from(p: ConvexNetPotential) -> Self {
        ConvexNetRepr { omega: p.omega, kappa: p.kappa, delta: p.delta }
    }
}

impl ConvexNetPotential {
    pub fn new(omega: Matrix, kappa: Vec<f64>, delta: Vec<f64>) -> Result<Self> {
        let h = omega.nrows();
        if kappa.len() != h || delta.len() != h {
            return Err(Error::Shape("omega rows, kappa and delta must agree".into()));
        }
        if delta.iter().any(|&d| d < 0.0 || !d.is_finite()) {
            return Err(Error::Argument("delta entries must be nonnegative and finite".into()));
        }
        if !omega.all_finite() || kappa.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("non-finite network parameter".into()));
        }
        Ok(ConvexNetPotential { omega, kappa, delta })
    }

    pub fn hidden_units(&self) -> usize {
        self.omega.nrows()
    }

    pub fn dim(&self) -> usize {
        self.omega.ncols()
    }

    pub fn omega(&self) -> &Matrix {
        &self.omega
    }

    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    pub fn phi(&self, x: &[f64]) -> f64 {
        (0..self.hidden_units())
            .map(|j| self.delta[j] * softplus(dot(self.omega.row(j), x) + self.kappa[j]))
            .sum()
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        for j in 0..self.hidden_units() {
            let a = sigmoid(dot(self.omega.row(j), x) + self.kappa[j]) * self.delta[j];
            for (gi, &w) in g.iter_mut().zip(self.omega.row(j)) {
                *gi += a * w;
            }
        }
        g
    }

    /// Hessian sum_j delta_j sigma'(a_j) omega_j omega_j'.
    pub fn hessian(&self, x: &[f64]) -> Matrix {
        let d = self.dim();
        let mut h = Matrix::zeros(d, d);
        for j in 0..self.hidden_units() {
            let s = sigmoid(dot(self.omega.row(j), x) + self.kappa[j]);
            let c = self.delta[j] * s * (1.0 - s);
            let row = self.omega.row(j);
            for p in 0..d {
                for q in 0..d {
                    h[(p, q)] += c * row[p] * row[q];
                }
            }
        }
        h
    }

    pub fn cost(&self, y: &[f64], z: &[f64]) -> f64 {
        let g = self.grad(y);
        let lin: f64 = g.iter().zip(z.iter().zip(y)).map(|(gi, (zi, yi))| gi * (zi - yi)).sum();
        self.phi(z) - self.phi(y) - lin
    }
}

/// Tagged union over the potential families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PotentialModel {
    Quadratic(QuadraticPotential),
    Isotonic1d(IsotonicDerivative1D),
    ConvexNet(ConvexNetPotential),
}

impl PotentialModel {
    pub fn dim(&self) -> usize {
        match self {
            PotentialModel::Quadratic(q) => q.dim(),
            PotentialModel::Isotonic1d(_) => 1,
            PotentialModel::ConvexNet(n) => n.dim(),
        }
    }

    fn check_dim(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.dim() {
            return Err(Error::Shape(format!(
                "point has dimension {} but potential expects {}",
                z.len(),
                self.dim()
            )));
        }
        Ok(())
    }
}

/// Gradient of the potential at `z`.
pub fn grad_potential(p: &PotentialModel, z: &[f64]) -> Result<Vec<f64>> {
    p.check_dim(z)?;
    Ok(match p {
        PotentialModel::Quadratic(q) => q.grad(z),
        PotentialModel::Isotonic1d(iso) => vec![iso.eval(z[0])],
        PotentialModel::ConvexNet(net) => net.grad(z),
    })
}

/// Bregman cost induced by the potential.
pub fn bregman_cost(p: &PotentialModel, y: &[f64], z: &[f64]) -> Result<f64> {
    p.check_dim(y)?;
    p.check_dim(z)?;
    Ok(match p {
        PotentialModel::Quadratic(q) => q.cost(y, z),
        PotentialModel::Isotonic1d(iso) => iso.cost(y[0], z[0]),
        PotentialModel::ConvexNet(net) => net.cost(y, z),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_is_mz() {
        let q = QuadraticPotential::from_matrix(&Matrix::scaled_identity(2, 2.0)).unwrap();
        let g = q.grad(&[1.0, 1.0]);
        // M round-trips through its Cholesky factor, so allow fp reconstruction noise.
        assert!((g[0] - 2.0).abs() < 1e-12 && (g[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn quadratic_cost_examples() {
        let id = QuadraticPotential::from_matrix(&Matrix::identity(3)).unwrap();
        let v = [1.0, 2.0, -2.0];
        assert!((id.cost(&[0.0; 3], &v) - 0.5 * 9.0).abs() < 1e-12);
        assert_eq!(id.cost(&v, &v), 0.0);
        let q = QuadraticPotential::from_matrix(&Matrix::diag(&[2.0, 3.0])).unwrap();
        // delta = (-1, 1): 1/2 (2 + 3) = 2.5
        assert!((q.cost(&[1.0, 0.0], &[0.0, 1.0]) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn quadratic_cost_is_symmetric() {
        let q = QuadraticPotential::from_matrix(&Matrix::diag(&[0.5, 4.0])).unwrap();
        let y = [0.3, -1.2];
        let z = [2.0, 0.7];
        assert_eq!(q.cost(&y, &z), q.cost(&z, &y));
    }

    #[test]
    fn isotonic_interpolates_and_extends() {
        let iso = IsotonicDerivative1D::new(vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        assert_eq!(iso.eval(0.5), 0.5);
        assert_eq!(iso.eval(-3.0), 0.0);
        assert_eq!(iso.eval(9.0), 1.0);
    }

    #[test]
    fn isotonic_integration_examples() {
        // phi'(t) = t on [0, 2], anchored at 0: phi(2) = 2.
        let iso = IsotonicDerivative1D::new(vec![0.0, 2.0], vec![0.0, 2.0]).unwrap();
        let phi = integrate_isotonic(&iso, 0.0).unwrap();
        assert!((phi.eval(2.0) - 2.0).abs() < 1e-12);
        assert_eq!(phi.eval(0.0), 0.0);

        let flat = IsotonicDerivative1D::new(vec![0.0, 1.0], vec![0.0, 0.0]).unwrap();
        let phi0 = integrate_isotonic(&flat, 0.5).unwrap();
        for t in [-1.0, 0.0, 0.3, 1.0, 2.0] {
            assert_eq!(phi0.eval(t), 0.0);
        }
    }

    #[test]
    fn isotonic_cost_nonnegative_zero_iff_equal() {
        let iso = IsotonicDerivative1D::new(vec![0.0, 1.0, 2.0], vec![0.1, 0.5, 2.0]).unwrap();
        for (y, z) in [(0.2, 1.7), (1.7, 0.2), (-1.0, 3.0), (0.5, 0.5)] {
            let c = iso.cost(y, z);
            assert!(c >= -1e-15);
            if y == z {
                assert_eq!(c, 0.0);
            }
        }
        assert!(iso.cost(0.2, 1.7) > 0.0);
    }

    #[test]
    fn convex_net_hand_gradient() {
        // h=1, delta=1, omega=(1,0), kappa=0 at x=0: sigma'(0) = 0.5.
        let net = ConvexNetPotential::new(
            Matrix::from_rows(&[vec![1.0, 0.0]]),
            vec![0.0],
            vec![1.0],
        )
        .unwrap();
        let g = net.grad(&[0.0, 0.0]);
        assert!((g[0] - 0.5).abs() < 1e-12);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn convex_net_rejects_negative_delta() {
        let err = ConvexNetPotential::new(Matrix::identity(2), vec![0.0, 0.0], vec![1.0, -0.1]);
        assert!(err.is_err());
    }

    #[test]
    fn grad_matches_finite_differences() {
        let mut rng = crate::rng::Rng::seed_from_u64(17);
        let q = PotentialModel::Quadratic(
            QuadraticPotential::from_matrix(&Matrix::from_rows(&[
                vec![2.0, 0.3],
                vec![0.3, 1.0],
            ]))
            .unwrap(),
        );
        let net = PotentialModel::ConvexNet(
            ConvexNetPotential::new(
                Matrix::from_rows(&[vec![0.5, -0.2], vec![1.0, 0.8], vec![-0.4, 0.6]]),
                vec![0.1, -0.2, 0.0],
                vec![0.5, 1.0, 0.25],
            )
            .unwrap(),
        );
        let phi = |p: &PotentialModel, x: &[f64]| -> f64 {
            match p {
                PotentialModel::Quadratic(q) => q.phi(x),
                PotentialModel::ConvexNet(n) => n.phi(x),
                PotentialModel::Isotonic1d(_) => unreachable!(),
            }
        };
        for p in [&q, &net] {
            for _ in 0..20 {
                let x = [rng.next_f64() * 4.0 - 2.0, rng.next_f64() * 4.0 - 2.0];
                let g = grad_potential(p, &x).unwrap();
                for k in 0..2 {
                    let h = 1e-6;
                    let mut xp = x;
                    let mut xm = x;
                    xp[k] += h;
                    xm[k] -= h;
                    let fd = (phi(p, &xp) - phi(p, &xm)) / (2.0 * h);
                    let denom = g[k].abs().max(1.0);
                    assert!(
                        (g[k] - fd).abs() / denom < 1e-5,
                        "grad {g:?} vs fd {fd} at {x:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn convex_net_second_difference_nonnegative() {
        let mut rng = crate::rng::Rng::seed_from_u64(23);
        let net = ConvexNetPotential::new(
            Matrix::from_rows(&[vec![0.5, -0.2], vec![1.0, 0.8]]),
            vec![0.1, -0.2],
            vec![0.5, 1.0],
        )
        .unwrap();
        for _ in 0..50 {
            let x = [rng.next_f64() * 4.0 - 2.0, rng.next_f64() * 4.0 - 2.0];
            let mut u = [rng.next_f64() - 0.5, rng.next_f64() - 0.5];
            let norm = (u[0] * u[0] + u[1] * u[1]).sqrt().max(1e-9);
            u[0] /= norm;
            u[1] /= norm;
            let h = 1e-3;
            let plus = net.phi(&[x[0] + h * u[0], x[1] + h * u[1]]);
            let minus = net.phi(&[x[0] - h * u[0], x[1] - h * u[1]]);
            let second = plus - 2.0 * net.phi(&x) + minus;
            assert!(second >= -1e-9, "second difference {second}");
        }
    }

    #[test]
    fn gradient_shift_leaves_cost_unchanged() {
        // Adding a linear term to phi shifts grad by a constant; the induced
        // cost must not move. Isotonic family: shift all values.
        let iso = IsotonicDerivative1D::new(vec![0.0, 1.0, 3.0], vec![0.0, 0.4, 1.0]).unwrap();
        let shifted = IsotonicDerivative1D::new(
            vec![0.0, 1.0, 3.0],
            vec![5.0, 5.4, 6.0],
        )
        .unwrap();
        for (y, z) in [(0.1, 2.5), (2.0, 0.5), (1.0, 1.0)] {
            assert!((iso.cost(y, z) - shifted.cost(y, z)).abs() < 1e-10);
        }
    }

    #[test]
    fn potential_json_round_trip() {
        let p = PotentialModel::Quadratic(
            QuadraticPotential::from_matrix(&Matrix::diag(&[0.1, 0.2, 0.4])).unwrap(),
        );
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains("\"family\":\"quadratic\""));
        let back: PotentialModel = serde_json::from_str(&s).unwrap();
        assert_eq!(p, back);

        let iso = PotentialModel::Isotonic1d(
            IsotonicDerivative1D::new(vec![0.0, 1.0], vec![0.2, 0.9]).unwrap(),
        );
        let s = serde_json::to_string(&iso).unwrap();
        let back: PotentialModel = serde_json::from_str(&s).unwrap();
        assert_eq!(iso, back);
    }

    #[test]
    fn dimension_mismatch_is_shape_error() {
        let p = PotentialModel::Quadratic(
            QuadraticPotential::from_matrix(&Matrix::identity(2)).unwrap(),
        );
        assert!(matches!(grad_potential(&p, &[1.0]), Err(Error::Shape(_))));
        let iso = PotentialModel::Isotonic1d(
            IsotonicDerivative1D::new(vec![0.0, 1.0], vec![0.0, 1.0]).unwrap(),
        );
        assert!(matches!(grad_potential(&iso, &[1.0, 2.0]), Err(Error::Shape(_))));
    }
}
