//! Nonparametric 1D estimation of the potential derivative: monotone OT
//! pairing, then least squares over non-decreasing piecewise-linear functions
//! of the pairing residuals, solved by projected gradient on nonnegative
//! knot increments.

use crate::agents::BenefitSpec;
use crate::error::{Error, Result};
use crate::measures::EmpiricalMeasure;
use crate::ot::w2_1d;
use crate::potentials::IsotonicDerivative1D;

const PG_TOL: f64 = 1e-8;
const PG_MAX_ITERS: usize = 50_000;

/// One pairing constraint g(knot b) - g(knot a) ~ target.
struct Row {
    a: usize,
    b: usize,
    target: f64,
}

/// Applies the pairing design matrix through prefix sums: residuals r_i =
/// (P_b - P_a) - target with P the cumulative increments.
fn residuals(rows: &[Row], prefix: &[f64]) -> Vec<f64> {
    rows.iter()
        .map(|r| prefix[r.b] - prefix[r.a] - r.target)
        .collect()
}

fn prefix_sums(delta: &[f64]) -> Vec<f64> {
    let mut p = vec![0.0; delta.len() + 1];
    for (i, &d) in delta.iter().enumerate() {
        p[i + 1] = p[i] + d;
    }
    p
}

/// Gradient of sum r_i^2 with respect to the increments, via a difference
/// array over each row's knot interval.
fn gradient(rows: &[Row], res: &[f64], n_inc: usize) -> Vec<f64> {
    let mut diff = vec![0.0; n_inc + 1];
    for (row, &r) in rows.iter().zip(res) {
        let (lo, hi, sign) = if row.b >= row.a {
            (row.a, row.b, 1.0)
        } else {
            (row.b, row.a, -1.0)
        };
        // d residual / d delta_l = sign for l in (lo, hi]
        diff[lo] += 2.0 * r * sign;
        diff[hi] -= 2.0 * r * sign;
    }
    let mut grad = vec![0.0; n_inc];
    let mut acc = 0.0;
    for l in 0..n_inc {
        acc += diff[l];
        grad[l] = acc;
    }
    grad
}

/// Largest eigenvalue of A'A estimated by power iteration through the fast
/// residual/gradient applies.
fn lipschitz(rows: &[Row], n_inc: usize) -> f64 {
    if n_inc == 0 || rows.is_empty() {
        return 1.0;
    }
    let mut v = vec![1.0_f64; n_inc];
    let mut lam = 1.0;
    for _ in 0..60 {
        // w = A'A v computed as gradient of 1/2||Av||^2
        let prefix = prefix_sums(&v);
        let av: Vec<f64> = rows.iter().map(|r| prefix[r.b] - prefix[r.a]).collect();
        let fake_rows: Vec<Row> = rows
            .iter()
            .map(|r| Row { a: r.a, b: r.b, target: 0.0 })
            .collect();
        let w = gradient(&fake_rows, &av, n_inc);
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-300 {
            return 1.0;
        }
        lam = norm / 2.0; // gradient carries the factor 2
        let inv = 1.0 / norm;
        v = w.iter().map(|x| x * inv).collect();
    }
    (2.0 * lam).max(1e-12)
}

/// Estimates phi' from one ex-ante and one ex-post sample under a known
/// benefit. Unequal sizes are reconciled by a seeded subsample of the larger
/// side. The result is normalized to mean zero over its knots.
pub fn fit_isotonic_phi_prime_1d(
    ex_ante: &EmpiricalMeasure,
    ex_post: &EmpiricalMeasure,
    benefit: &BenefitSpec,
    seed: u64,
) -> Result<IsotonicDerivative1D> {
    if ex_ante.dim() != 1 || ex_post.dim() != 1 {
        return Err(Error::Shape("isotonic estimation is 1D only".into()));
    }
    if benefit.dim() != 1 {
        return Err(Error::Domain("benefit must be one-dimensional here".into()));
    }
    let n = ex_ante.len().min(ex_post.len());
    if n < 5 {
        return Err(Error::InsufficientData { need: 5, got: n });
    }
    let a = if ex_ante.len() > n { ex_ante.subsample(n, seed)? } else { ex_ante.clone() };
    let b = if ex_post.len() > n { ex_post.subsample(n, seed.wrapping_add(1))? } else { ex_post.clone() };

    let (_, pairing) = w2_1d(&a, &b)?;
    let pairing = pairing.ok_or_else(|| {
        Error::Argument("monotone pairing needs equal-size uniform samples".into())
    })?;

    // Knots: union of both samples, strictly increasing.
    let mut knots: Vec<f64> = a
        .points()
        .iter()
        .chain(b.points())
        .map(|p| p[0])
        .collect();
    knots.sort_by(|x, y| x.partial_cmp(y).unwrap());
    knots.dedup();
    let scale = knots[knots.len() - 1] - knots[0];
    if scale <= 0.0 {
        // Every observation identical: phi' is flat zero at that point.
        return IsotonicDerivative1D::new(vec![knots[0], knots[0] + 1.0], vec![0.0, 0.0]);
    }
    // Merge knots closer than the strict-increase resolution.
    let mut merged = vec![knots[0]];
    for &k in &knots[1..] {
        if k - merged[merged.len() - 1] > 1e-12 * scale.max(1.0) {
            merged.push(k);
        }
    }
    let knots = merged;
    let locate = |x: f64| -> usize {
        match knots.binary_search_by(|k| k.partial_cmp(&x).unwrap()) {
            Ok(i) => i,
            Err(i) => {
                // merged duplicates land between their neighbors; snap to nearest
                if i == 0 {
                    0
                } else if i >= knots.len() {
                    knots.len() - 1
                } else if (x - knots[i - 1]).abs() <= (knots[i] - x).abs() {
                    i - 1
                } else {
                    i
                }
            }
        }
    };

    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let z = a.point(i)[0];
        let zp = b.point(pairing[i])[0];
        let target = benefit.grad(&[zp])?[0];
        rows.push(Row { a: locate(z), b: locate(zp), target });
    }

    let n_inc = knots.len() - 1;
    let mut delta = vec![0.0_f64; n_inc];
    let lip = lipschitz(&rows, n_inc);
    let step = 1.0 / lip;

    // FISTA with nonnegativity projection and objective restart.
    let mut y = delta.clone();
    let mut t = 1.0_f64;
    let mut prev_obj = f64::INFINITY;
    for _iter in 0..PG_MAX_ITERS {
        let prefix = prefix_sums(&y);
        let res = residuals(&rows, &prefix);
        let grad = gradient(&rows, &res, n_inc);
        let mut next: Vec<f64> = y
            .iter()
            .zip(&grad)
            .map(|(v, g)| (v - step * g).max(0.0))
            .collect();
        let obj: f64 = {
            let p = prefix_sums(&next);
            residuals(&rows, &p).iter().map(|r| r * r).sum()
        };
        if obj > prev_obj + 1e-15 {
            // restart the momentum from the last stable point
            t = 1.0;
            y = delta.clone();
            prev_obj = f64::INFINITY;
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_next;
        y = next
            .iter()
            .zip(&delta)
            .map(|(n1, n0)| n1 + momentum * (n1 - n0))
            .map(|v| v.max(0.0))
            .collect();
        std::mem::swap(&mut delta, &mut next);
        t = t_next;
        prev_obj = obj;

        // projected-gradient optimality check at the current iterate
        let prefix = prefix_sums(&delta);
        let res = residuals(&rows, &prefix);
        let grad = gradient(&rows, &res, n_inc);
        let pg = delta
            .iter()
            .zip(&grad)
            .map(|(&v, &g)| if v > 0.0 { g.abs() } else { g.min(0.0).abs() })
            .fold(0.0_f64, f64::max);
        if pg <= PG_TOL {
            break;
        }
    }

    let prefix = prefix_sums(&delta);
    let mean = prefix[..knots.len()].iter().sum::<f64>() / knots.len() as f64;
    let values: Vec<f64> = prefix[..knots.len()].iter().map(|p| p - mean).collect();
    IsotonicDerivative1D::new(knots, values)
}

/// Residual objective of a fitted derivative against a fresh pairing of the
/// same data; exposed for diagnostics and tests.
pub fn isotonic_fit_residual(
    fit: &IsotonicDerivative1D,
    ex_ante: &EmpiricalMeasure,
    ex_post: &EmpiricalMeasure,
    benefit: &BenefitSpec,
) -> Result<f64> {
    let (_, pairing) = w2_1d(ex_ante, ex_post)?;
    let pairing = pairing.ok_or_else(|| {
        Error::Argument("residual check needs equal-size uniform samples".into())
    })?;
    let mut total = 0.0;
    for i in 0..ex_ante.len() {
        let z = ex_ante.point(i)[0];
        let zp = ex_post.point(pairing[i])[0];
        let r = fit.eval(zp) - fit.eval(z) - benefit.grad(&[zp])?[0];
        total += r * r;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{respond_measure, BenefitSpec};
    use crate::linalg::Matrix;
    use crate::measures::{pushforward, sample_gaussian};
    use crate::potentials::{PotentialModel, QuadraticPotential};

    #[test]
    fn zero_benefit_identical_samples_gives_flat_zero() {
        let m = sample_gaussian(&[0.0], &Matrix::identity(1), 40, 9).unwrap();
        let benefit = BenefitSpec::Linear { theta: vec![0.0] };
        let fit = fit_isotonic_phi_prime_1d(&m, &m, &benefit, 0).unwrap();
        assert!(fit.values().iter().all(|&v| v.abs() < 1e-12));
        let res = isotonic_fit_residual(&fit, &m, &m, &benefit).unwrap();
        assert!(res < 1e-20);
    }

    #[test]
    fn too_few_samples_is_an_error() {
        let m = EmpiricalMeasure::from_scalars(&[0.0, 1.0, 2.0]).unwrap();
        let err = fit_isotonic_phi_prime_1d(&m, &m, &BenefitSpec::Linear { theta: vec![0.0] }, 0);
        assert!(matches!(err, Err(Error::InsufficientData { need: 5, got: 3 })));
    }

    #[test]
    fn exactly_consistent_instance_reaches_zero_residual() {
        // World: phi'(z) = 0.2 z (quadratic), linear benefit theta = 0.3,
        // ex-post generated by the exact closed-form response of the same
        // sample, so a consistent non-decreasing g exists.
        let sigma = 0.2;
        let theta = 0.3;
        let truth = PotentialModel::Quadratic(
            QuadraticPotential::from_matrix(&Matrix::diag(&[sigma])).unwrap(),
        );
        let benefit = BenefitSpec::Linear { theta: vec![theta] };
        let ex_ante = sample_gaussian(&[0.0], &Matrix::identity(1), 60, 5).unwrap();
        let ex_post = respond_measure(&truth, &benefit, &ex_ante).unwrap();
        let fit = fit_isotonic_phi_prime_1d(&ex_ante, &ex_post, &benefit, 0).unwrap();
        let res = isotonic_fit_residual(&fit, &ex_ante, &ex_post, &benefit).unwrap();
        assert!(res < 1e-12, "residual {res}");
    }

    #[test]
    fn recovers_linear_slope_in_the_interior() {
        // phi = 0.5 sigma z^2 with sigma = 0.1, linear benefit: T(z) = z + theta/sigma.
        let sigma = 0.1;
        let truth = PotentialModel::Quadratic(
            QuadraticPotential::from_matrix(&Matrix::diag(&[sigma])).unwrap(),
        );
        let benefit = BenefitSpec::Linear { theta: vec![0.25] };
        let ex_ante = sample_gaussian(&[0.0], &Matrix::identity(1), 200, 21).unwrap();
        let fresh = sample_gaussian(&[0.0], &Matrix::identity(1), 200, 22).unwrap();
        let ex_post = respond_measure(&truth, &benefit, &fresh).unwrap();
        let fit = fit_isotonic_phi_prime_1d(&ex_ante, &ex_post, &benefit, 0).unwrap();

        // Slope over the central half of the knots.
        let k = fit.knots();
        let q1 = k[k.len() / 4];
        let q3 = k[3 * k.len() / 4];
        let slope = (fit.eval(q3) - fit.eval(q1)) / (q3 - q1);
        assert!(
            (slope - sigma).abs() / sigma < 0.35,
            "slope {slope} vs sigma {sigma}"
        );
    }

    #[test]
    fn unequal_sizes_are_subsampled_deterministically() {
        let big = sample_gaussian(&[0.0], &Matrix::identity(1), 120, 3).unwrap();
        let small = pushforward(
            &sample_gaussian(&[0.0], &Matrix::identity(1), 50, 4).unwrap(),
            |p| vec![p[0] + 1.0],
        )
        .unwrap();
        let benefit = BenefitSpec::Linear { theta: vec![0.1] };
        let f1 = fit_isotonic_phi_prime_1d(&big, &small, &benefit, 7).unwrap();
        let f2 = fit_isotonic_phi_prime_1d(&big, &small, &benefit, 7).unwrap();
        assert_eq!(f1, f2);
    }
}
