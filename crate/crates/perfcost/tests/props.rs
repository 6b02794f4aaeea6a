//! Property tests for the spec-level invariants: coupling marginals across
//! all solver paths, 1D/LP agreement, metric sanity, mass preservation, and
//! Bregman cost positivity.

use proptest::prelude::*;

use perfcost::agents::{best_response, BenefitSpec, RootExp};
use perfcost::linalg::Matrix;
use perfcost::measures::{pushforward, EmpiricalMeasure};
use perfcost::ot::{
    exact_coupling, free_support_barycenter, sinkhorn_coupling, w2_1d, BarycenterConfig,
    BarycenterInit,
};
use perfcost::potentials::{
    bregman_cost, grad_potential, IsotonicDerivative1D, PotentialModel, QuadraticPotential,
};

fn uniform_measure(points: Vec<Vec<f64>>) -> EmpiricalMeasure {
    EmpiricalMeasure::from_points(points).unwrap()
}

fn weighted_measure(points: Vec<Vec<f64>>, raw_w: Vec<f64>) -> EmpiricalMeasure {
    let total: f64 = raw_w.iter().sum();
    let w: Vec<f64> = raw_w.iter().map(|x| x / total).collect();
    // renormalize exactly
    let s: f64 = w.iter().sum();
    let w: Vec<f64> = w.iter().map(|x| x / s).collect();
    EmpiricalMeasure::new(points, w).unwrap()
}

fn points_strategy(n: usize, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(
        prop::collection::vec(-5.0..5.0f64, d..=d),
        n..=n,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn exact_coupling_marginals_hold_uniform(
        pts_a in points_strategy(6, 2),
        pts_b in points_strategy(6, 2),
    ) {
        let a = uniform_measure(pts_a);
        let b = uniform_measure(pts_b);
        let c = exact_coupling(&a, &b).unwrap();
        c.validate_marginals(1e-9).unwrap();
    }

    #[test]
    fn exact_coupling_marginals_hold_weighted(
        pts_a in points_strategy(5, 2),
        pts_b in points_strategy(7, 2),
        wa in prop::collection::vec(0.05..1.0f64, 5..=5),
        wb in prop::collection::vec(0.05..1.0f64, 7..=7),
    ) {
        let a = weighted_measure(pts_a, wa);
        let b = weighted_measure(pts_b, wb);
        let c = exact_coupling(&a, &b).unwrap();
        c.validate_marginals(1e-9).unwrap();
    }

    #[test]
    fn sinkhorn_marginals_hold_after_rounding(
        pts_a in points_strategy(5, 2),
        pts_b in points_strategy(6, 2),
    ) {
        let a = uniform_measure(pts_a);
        let b = uniform_measure(pts_b);
        let out = sinkhorn_coupling(&a, &b, 0.05, 500, 1e-8).unwrap();
        out.coupling.validate_marginals(1e-9).unwrap();
        // regularized cost can never beat the exact optimum by more than noise
        let exact = exact_coupling(&a, &b).unwrap().cost();
        prop_assert!(out.coupling.cost() >= exact - 1e-9);
    }

    #[test]
    fn w2_1d_agrees_with_lp_on_general_weights(
        vals_a in prop::collection::vec(-4.0..4.0f64, 6..=6),
        vals_b in prop::collection::vec(-4.0..4.0f64, 4..=4),
        wa in prop::collection::vec(0.1..1.0f64, 6..=6),
        wb in prop::collection::vec(0.1..1.0f64, 4..=4),
    ) {
        let a = weighted_measure(vals_a.iter().map(|&v| vec![v]).collect(), wa);
        let b = weighted_measure(vals_b.iter().map(|&v| vec![v]).collect(), wb);
        let (quantile_cost, _) = w2_1d(&a, &b).unwrap();
        let lp_cost = exact_coupling(&a, &b).unwrap().cost();
        prop_assert!((quantile_cost - lp_cost).abs() <= 1e-9,
            "quantile {quantile_cost} vs lp {lp_cost}");
    }

    #[test]
    fn w2_triangle_inequality(
        pts_a in points_strategy(5, 2),
        pts_b in points_strategy(5, 2),
        pts_c in points_strategy(5, 2),
    ) {
        let a = uniform_measure(pts_a);
        let b = uniform_measure(pts_b);
        let c = uniform_measure(pts_c);
        let ab = exact_coupling(&a, &b).unwrap().cost().sqrt();
        let ac = exact_coupling(&a, &c).unwrap().cost().sqrt();
        let cb = exact_coupling(&c, &b).unwrap().cost().sqrt();
        prop_assert!(ab <= ac + cb + 1e-9, "{ab} > {ac} + {cb}");
    }

    #[test]
    fn pushforward_preserves_mass_exactly(
        pts in points_strategy(6, 2),
        raw_w in prop::collection::vec(0.05..1.0f64, 6..=6),
        shift in -3.0..3.0f64,
    ) {
        let m = weighted_measure(pts, raw_w);
        let pushed = pushforward(&m, |p| p.iter().map(|x| x + shift).collect()).unwrap();
        prop_assert_eq!(m.weights(), pushed.weights());
    }

    #[test]
    fn bregman_cost_nonnegative_all_families(
        y in -3.0..3.0f64,
        z in -3.0..3.0f64,
        m_diag in 0.05..2.0f64,
    ) {
        let quad = PotentialModel::Quadratic(
            QuadraticPotential::from_matrix(&Matrix::diag(&[m_diag])).unwrap(),
        );
        prop_assert!(bregman_cost(&quad, &[y], &[z]).unwrap() >= 0.0);
        let iso = PotentialModel::Isotonic1d(
            IsotonicDerivative1D::new(vec![-4.0, 0.0, 4.0], vec![-0.5, 0.0, 1.0]).unwrap(),
        );
        prop_assert!(bregman_cost(&iso, &[y], &[z]).unwrap() >= -1e-12);
    }

    #[test]
    fn best_response_first_order_residual(
        z in 0.1..3.0f64,
        sigma in 0.05..0.5f64,
        theta in 0.05..0.8f64,
    ) {
        let p = PotentialModel::Quadratic(
            QuadraticPotential::from_matrix(&Matrix::diag(&[sigma])).unwrap(),
        );
        let b = BenefitSpec::Power { theta: vec![theta], exponent: RootExp::Half };
        let r = best_response(&p, &b, &[z]).unwrap();
        let gp = grad_potential(&p, &r).unwrap()[0];
        let gz = grad_potential(&p, &[z]).unwrap()[0];
        let gb = b.grad(&r).unwrap()[0];
        prop_assert!((gb - gp + gz).abs() <= 1e-8);
    }

    #[test]
    fn barycenter_of_identical_inputs_is_exact(
        pts in points_strategy(5, 2),
    ) {
        let m = uniform_measure(pts);
        let r = free_support_barycenter(
            &[m.clone(), m.clone(), m.clone()],
            5,
            BarycenterInit::Measure(m),
            &BarycenterConfig::default(),
        )
        .unwrap();
        prop_assert!(r.objective() <= 1e-12);
        for w in r.objective_trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9);
        }
    }
}
