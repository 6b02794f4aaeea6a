//! Least-squares baseline for the cost matrix: regress observed mean shifts
//! of the ex-post samples on the deployed slopes.

use crate::agents::LinearClassifier;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::measures::EmpiricalMeasure;

#[derive(Debug, Clone)]
pub struct LsBaselineFit {
    pub m_hat: Matrix,
    /// The fitted shift matrix A with shift_k ~ -A beta_k (A estimates M^{-1}).
    pub shift_matrix: Matrix,
    /// Condition number of A; above 1e12 the inverse falls back to the
    /// pseudo-inverse and this flag is set.
    pub condition: f64,
    pub ill_conditioned: bool,
}

/// Solves min_A sum_k || (mean(Q_k) - mean(P)) + A beta_k ||^2 and returns
/// M_hat = A^{-1}. Requires at least d deployments with slopes spanning R^d.
pub fn ls_baseline(
    ex_ante: &EmpiricalMeasure,
    ex_posts: &[EmpiricalMeasure],
    deployed: &[LinearClassifier],
) -> Result<LsBaselineFit> {
    let d = ex_ante.dim();
    let k = ex_posts.len();
    if k != deployed.len() {
        return Err(Error::Argument(format!(
            "{k} ex-post samples but {} deployed classifiers",
            deployed.len()
        )));
    }
    if k < d {
        return Err(Error::Identifiability(format!(
            "need at least d = {d} deployments to identify M, got {k}"
        )));
    }
    let base_mean = ex_ante.mean();
    let mut s_bb = Matrix::zeros(d, d);
    let mut s_sb = Matrix::zeros(d, d);
    for (q, clf) in ex_posts.iter().zip(deployed) {
        if q.dim() != d || clf.beta.len() != d {
            return Err(Error::Shape("dimension mismatch in LS baseline".into()));
        }
        let shift: Vec<f64> = q.mean().iter().zip(&base_mean).map(|(a, b)| a - b).collect();
        for p in 0..d {
            for r in 0..d {
                s_bb[(p, r)] += clf.beta[p] * clf.beta[r];
                s_sb[(p, r)] += shift[p] * clf.beta[r];
            }
        }
    }
    let (eigs, _) = s_bb.sym_eigen()?;
    let scale = eigs.last().copied().unwrap_or(0.0).max(1e-300);
    if eigs[0] < 1e-10 * scale.max(1.0) {
        return Err(Error::Identifiability(
            "deployed slopes do not span the feature space; M is not identified".into(),
        ));
    }
    // A S_bb = -S_sb  =>  A' = S_bb^{-1} (-S_sb)'
    let a = s_bb.solve_multi(&s_sb.scale(-1.0).transpose())?.transpose();
    let condition = a.cond();
    let (m_hat, ill) = if condition.is_finite() && condition <= 1e12 {
        (a.inverse()?, false)
    } else {
        (a.pinv(1e-12)?, true)
    };
    Ok(LsBaselineFit { m_hat, shift_matrix: a, condition, ill_conditioned: ill })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{respond_measure, BenefitSpec};
    use crate::measures::sample_gaussian;
    use crate::potentials::{PotentialModel, QuadraticPotential};

    #[test]
    fn noiseless_means_recover_m_exactly() {
        // Build ex-post measures as exact shifts of the ex-ante sample.
        let m_true = Matrix::from_rows(&[vec![0.25, 0.05], vec![0.05, 0.4]]);
        let m_inv = m_true.inverse().unwrap();
        let ex_ante = sample_gaussian(&[0.0; 2], &Matrix::identity(2), 100, 3).unwrap();
        let betas = [vec![-1.0, -0.1], vec![-0.3, -0.8], vec![-0.6, -0.5]];
        let mut ex_posts = Vec::new();
        let mut deployed = Vec::new();
        for beta in betas {
            // true shift is -M^{-1} beta for negative-entry slopes
            let shift = m_inv.matvec(&beta.iter().map(|b| -b).collect::<Vec<_>>());
            let shifted = crate::measures::pushforward(&ex_ante, |p| {
                p.iter().zip(&shift).map(|(a, s)| a + s).collect()
            })
            .unwrap();
            ex_posts.push(shifted);
            deployed.push(LinearClassifier { alpha: 0.0, beta });
        }
        let fit = ls_baseline(&ex_ante, &ex_posts, &deployed).unwrap();
        let rel = fit.m_hat.sub(&m_true).frobenius_norm() / m_true.frobenius_norm();
        assert!(rel < 1e-9, "rel {rel}");
        assert!(!fit.ill_conditioned);
    }

    #[test]
    fn underdetermined_is_identifiability_error() {
        let ex_ante = sample_gaussian(&[0.0; 3], &Matrix::identity(3), 20, 1).unwrap();
        let q = ex_ante.clone();
        let clf = LinearClassifier { alpha: 0.0, beta: vec![-1.0, 0.0, 0.0] };
        let err = ls_baseline(&ex_ante, &[q], &[clf]);
        assert!(matches!(err, Err(Error::Identifiability(_))));
    }

    #[test]
    fn collinear_slopes_are_rejected() {
        let ex_ante = sample_gaussian(&[0.0; 2], &Matrix::identity(2), 20, 1).unwrap();
        let clfs: Vec<LinearClassifier> = (1..=3)
            .map(|k| LinearClassifier { alpha: 0.0, beta: vec![-(k as f64), 0.0] })
            .collect();
        let posts = vec![ex_ante.clone(), ex_ante.clone(), ex_ante.clone()];
        let err = ls_baseline(&ex_ante, &posts, &clfs);
        assert!(matches!(err, Err(Error::Identifiability(_))));
    }

    #[test]
    fn agrees_with_paired_regression_on_noiseless_data() {
        let m_true = Matrix::diag(&[0.2, 0.5]);
        let truth = PotentialModel::Quadratic(QuadraticPotential::from_matrix(&m_true).unwrap());
        let ex_ante = sample_gaussian(&[0.0; 2], &Matrix::identity(2), 200, 9).unwrap();
        let betas = [vec![-0.9, -0.2], vec![-0.2, -0.7]];
        let mut ex_posts = Vec::new();
        let mut deployed = Vec::new();
        let mut deployments = Vec::new();
        for beta in betas {
            let benefit = BenefitSpec::AbsLinear { beta: beta.clone() };
            let post = respond_measure(&truth, &benefit, &ex_ante).unwrap();
            deployments.push((ex_ante.clone(), post.clone(), benefit));
            ex_posts.push(post);
            deployed.push(LinearClassifier { alpha: 0.0, beta });
        }
        let ls = ls_baseline(&ex_ante, &ex_posts, &deployed).unwrap();
        let paired =
            crate::inference::estimate_sigma_from_deployments(&deployments, 0).unwrap();
        let gap = ls.m_hat.sub(&paired.raw).frobenius_norm();
        assert!(gap < 1e-8, "gap {gap}");
        assert!(ls.m_hat.sub(&m_true).frobenius_norm() < 1e-8);
    }
}
