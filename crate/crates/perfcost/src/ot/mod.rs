//! Discrete optimal transport under squared-Euclidean ground cost: exact
//! couplings (assignment for equal-size uniform inputs, min-cost flow
//! otherwise), the 1D closed form, entropic regularization, and free-support
//! Wasserstein barycenters.

mod assignment;
mod barycenter;
mod netflow;
mod sinkhorn;

pub use barycenter::{free_support_barycenter, BarycenterConfig, BarycenterInit, BarycenterResult};
pub use sinkhorn::{sinkhorn_coupling, SinkhornOutput};

use crate::error::{Error, Result};
use crate::linalg::sqdist;
use crate::measures::EmpiricalMeasure;

/// Default cap on n*m for the exact solvers.
pub const DEFAULT_EXACT_CAP: usize = 500 * 500;

const MARGINAL_TOL: f64 = 1e-9;
const UNIFORM_TOL: f64 = 1e-12;

/// Transport plan between two empirical measures. Row sums equal the source
/// weights and column sums the target weights, both within 1e-9.
#[derive(Debug, Clone)]
pub struct Coupling {
    plan: Vec<Vec<f64>>,
    source: EmpiricalMeasure,
    target: EmpiricalMeasure,
}

impl Coupling {
    pub fn new(plan: Vec<Vec<f64>>, source: EmpiricalMeasure, target: EmpiricalMeasure) -> Result<Self> {
        if plan.len() != source.len() || plan.iter().any(|r| r.len() != target.len()) {
            return Err(Error::Shape(format!(
                "plan shape does not match measures ({}x{} expected)",
                source.len(),
                target.len()
            )));
        }
        let c = Coupling { plan, source, target };
        c.validate_marginals(MARGINAL_TOL)?;
        Ok(c)
    }

    pub fn plan(&self) -> &[Vec<f64>] {
        &self.plan
    }

    pub fn source(&self) -> &EmpiricalMeasure {
        &self.source
    }

    pub fn target(&self) -> &EmpiricalMeasure {
        &self.target
    }

    pub fn validate_marginals(&self, tol: f64) -> Result<()> {
        for (i, row) in self.plan.iter().enumerate() {
            if row.iter().any(|&v| v < -1e-15) {
                return Err(Error::Argument(format!("negative plan entry in row {i}")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - self.source.weights()[i]).abs() > tol {
                return Err(Error::Argument(format!(
                    "row {i} sums to {sum}, expected {}",
                    self.source.weights()[i]
                )));
            }
        }
        for j in 0..self.target.len() {
            let sum: f64 = self.plan.iter().map(|r| r[j]).sum();
            if (sum - self.target.weights()[j]).abs() > tol {
                return Err(Error::Argument(format!(
                    "column {j} sums to {sum}, expected {}",
                    self.target.weights()[j]
                )));
            }
        }
        Ok(())
    }

    /// Transport cost of this plan: sum of plan weights times squared
    /// Euclidean distances.
    pub fn cost(&self) -> f64 {
        let mut total = 0.0;
        for (i, row) in self.plan.iter().enumerate() {
            let p = self.source.point(i);
            for (j, &w) in row.iter().enumerate() {
                if w > 0.0 {
                    total += w * sqdist(p, self.target.point(j));
                }
            }
        }
        total
    }
}

/// Transport cost of a coupling (free-function spelling of [`Coupling::cost`]).
pub fn w2_cost(c: &Coupling) -> f64 {
    c.cost()
}

fn argsort_by_value(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap().then(a.cmp(&b)));
    idx
}

/// Squared 2-Wasserstein distance between 1D measures. For equal-size
/// uniform inputs also returns the monotone pairing: `pairing[i]` is the
/// target index matched to source point `i`.
pub fn w2_1d(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<(f64, Option<Vec<usize>>)> {
    if a.dim() != 1 || b.dim() != 1 {
        return Err(Error::Shape(format!(
            "w2_1d requires 1D measures, got dims {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    let av: Vec<f64> = a.points().iter().map(|p| p[0]).collect();
    let bv: Vec<f64> = b.points().iter().map(|p| p[0]).collect();
    let ia = argsort_by_value(&av);
    let ib = argsort_by_value(&bv);
    if a.len() == b.len() && a.is_uniform() && b.is_uniform() {
        let n = a.len();
        let mut pairing = vec![0usize; n];
        let mut cost = 0.0;
        for k in 0..n {
            let i = ia[k];
            let j = ib[k];
            pairing[i] = j;
            let d = av[i] - bv[j];
            cost += d * d / n as f64;
        }
        return Ok((cost, Some(pairing)));
    }
    // General weights: quantile (north-west) coupling over sorted atoms.
    let mut cost = 0.0;
    let mut i = 0;
    let mut j = 0;
    let mut wa = a.weights()[ia[0]];
    let mut wb = b.weights()[ib[0]];
    while i < a.len() && j < b.len() {
        let mass = wa.min(wb);
        if mass > 0.0 {
            let d = av[ia[i]] - bv[ib[j]];
            cost += mass * d * d;
        }
        wa -= mass;
        wb -= mass;
        if wa <= 1e-15 {
            i += 1;
            if i < a.len() {
                wa = a.weights()[ia[i]];
            }
        }
        if wb <= 1e-15 {
            j += 1;
            if j < b.len() {
                wb = b.weights()[ib[j]];
            }
        }
    }
    Ok((cost, None))
}

/// Exact Kantorovich coupling under squared-Euclidean cost. Equal-size
/// uniform instances go through the O(n^3) assignment solver; general
/// weights through min-cost flow. Zero-weight atoms are dropped before
/// solving and restored as zero rows/columns.
pub fn exact_coupling(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<Coupling> {
    exact_coupling_with_cap(a, b, DEFAULT_EXACT_CAP)
}

/// [`exact_coupling`] with an explicit size cap on n*m.
pub fn exact_coupling_with_cap(
    a: &EmpiricalMeasure,
    b: &EmpiricalMeasure,
    cap: usize,
) -> Result<Coupling> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!(
            "source dimension {} vs target dimension {}",
            a.dim(),
            b.dim()
        )));
    }
    let live_a: Vec<usize> = (0..a.len()).filter(|&i| a.weights()[i] > 0.0).collect();
    let live_b: Vec<usize> = (0..b.len()).filter(|&j| b.weights()[j] > 0.0).collect();
    let (n, m) = (live_a.len(), live_b.len());
    if n == 0 || m == 0 {
        return Err(Error::EmptyData("coupling needs positive mass on both sides".into()));
    }
    if n * m > cap {
        return Err(Error::SizeCap { n, m, cap });
    }

    let uniform_pair = n == m
        && live_a
            .iter()
            .all(|&i| (a.weights()[i] - 1.0 / n as f64).abs() <= UNIFORM_TOL)
        && live_b
            .iter()
            .all(|&j| (b.weights()[j] - 1.0 / m as f64).abs() <= UNIFORM_TOL);

    let mut plan = vec![vec![0.0_f64; b.len()]; a.len()];
    if uniform_pair {
        let cost = |i: usize, j: usize| sqdist(a.point(live_a[i]), b.point(live_b[j]));
        let row_to_col = assignment::solve_assignment(n, cost);
        let w = 1.0 / n as f64;
        for (i, &j) in row_to_col.iter().enumerate() {
            plan[live_a[i]][live_b[j]] = w;
        }
    } else {
        let wa: Vec<f64> = live_a.iter().map(|&i| a.weights()[i]).collect();
        let wb: Vec<f64> = live_b.iter().map(|&j| b.weights()[j]).collect();
        let sub = netflow::transport(&wa, &wb, |i, j| {
            sqdist(a.point(live_a[i]), b.point(live_b[j]))
        })?;
        for (i, row) in sub.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                plan[live_a[i]][live_b[j]] = v;
            }
        }
    }
    Coupling::new(plan, a.clone(), b.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(points: &[f64]) -> EmpiricalMeasure {
        EmpiricalMeasure::from_scalars(points).unwrap()
    }

    #[test]
    fn w2_1d_two_point_example() {
        let a = uniform(&[0.0, 1.0]);
        let b = uniform(&[2.0, 3.0]);
        let (cost, pairing) = w2_1d(&a, &b).unwrap();
        // enumerate both pairings: (4+4)/2 = 4 beats (9+1)/2 = 5
        assert!((cost - 4.0).abs() < 1e-12);
        assert_eq!(pairing, Some(vec![0, 1]));
    }

    #[test]
    fn w2_1d_identical_is_zero() {
        let a = uniform(&[0.3, -1.0, 2.0]);
        let (cost, _) = w2_1d(&a, &a).unwrap();
        assert!(cost.abs() < 1e-15);
    }

    #[test]
    fn w2_1d_single_pair() {
        let a = uniform(&[0.0]);
        let b = uniform(&[5.0]);
        let (cost, _) = w2_1d(&a, &b).unwrap();
        assert!((cost - 25.0).abs() < 1e-12);
    }

    #[test]
    fn w2_1d_rejects_higher_dimensions() {
        let a = EmpiricalMeasure::from_points(vec![vec![0.0, 0.0]]).unwrap();
        assert!(matches!(w2_1d(&a, &a), Err(Error::Shape(_))));
    }

    #[test]
    fn w2_1d_general_weights_quantile_cost() {
        let a = EmpiricalMeasure::new(vec![vec![0.0], vec![1.0]], vec![0.75, 0.25]).unwrap();
        let b = EmpiricalMeasure::new(vec![vec![0.0], vec![1.0]], vec![0.25, 0.75]).unwrap();
        let (cost, pairing) = w2_1d(&a, &b).unwrap();
        // 0.25 at distance 0, 0.5 moves 0->1, 0.25 at distance 0
        assert!((cost - 0.5).abs() < 1e-12);
        assert!(pairing.is_none());
    }

    #[test]
    fn exact_coupling_identity_example() {
        let a = EmpiricalMeasure::from_points(vec![vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let b = EmpiricalMeasure::from_points(vec![vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let c = exact_coupling(&a, &b).unwrap();
        // identity matching costs 1, the swap costs 2
        assert!((c.cost() - 1.0).abs() < 1e-12);
        assert!(c.plan()[0][0] > 0.0 && c.plan()[1][1] > 0.0);
    }

    #[test]
    fn exact_coupling_self_is_diagonal_zero() {
        let a = uniform(&[0.0, 1.0, 5.0]);
        let c = exact_coupling(&a, &a).unwrap();
        assert!(c.cost().abs() < 1e-15);
        for i in 0..3 {
            assert!((c.plan()[i][i] - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_coupling_cap_error_mentions_sinkhorn() {
        let a = uniform(&[0.0, 1.0, 2.0]);
        let err = exact_coupling_with_cap(&a, &a, 4).unwrap_err();
        assert!(matches!(err, Error::SizeCap { .. }));
        assert!(err.to_string().contains("sinkhorn"));
    }

    #[test]
    fn exact_coupling_drops_zero_weight_atoms() {
        let a = EmpiricalMeasure::new(
            vec![vec![0.0], vec![100.0], vec![1.0]],
            vec![0.5, 0.0, 0.5],
        )
        .unwrap();
        let b = uniform(&[0.0, 1.0]);
        let c = exact_coupling(&a, &b).unwrap();
        assert!(c.cost().abs() < 1e-12);
        assert!(c.plan()[1].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn w2_1d_agrees_with_exact_coupling() {
        let mut rng = crate::rng::Rng::seed_from_u64(11);
        for n in [3usize, 5, 8] {
            let a = uniform(&(0..n).map(|_| rng.next_f64() * 4.0 - 2.0).collect::<Vec<_>>());
            let b = uniform(&(0..n).map(|_| rng.next_f64() * 4.0 - 2.0).collect::<Vec<_>>());
            let (c1, _) = w2_1d(&a, &b).unwrap();
            let c2 = exact_coupling(&a, &b).unwrap().cost();
            assert!((c1 - c2).abs() < 1e-9, "1d {c1} vs lp {c2}");
        }
    }
}
