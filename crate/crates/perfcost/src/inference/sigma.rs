//! Paired quadratic-cost regression: match ex-ante and ex-post samples by
//! optimal transport, regress benefit gradients on transport displacements,
//! and report both the raw least-squares matrix and its PSD projection.

use crate::agents::BenefitSpec;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::measures::EmpiricalMeasure;
use crate::ot::{exact_coupling, w2_1d};

const GRAM_MIN_EIG: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SigmaEstimate {
    /// Unconstrained least-squares estimate (the object the convergence
    /// analysis is about).
    pub raw: Matrix,
    /// Symmetrized estimate with eigenvalues clipped at 1e-8.
    pub psd: Matrix,
    /// The regression Gram matrix X'X (its spectrum drives the
    /// convergence-rate bound).
    pub gram: Matrix,
    /// Smallest eigenvalue of X'X, for ill-posedness diagnostics.
    pub gram_min_eig: f64,
    /// Number of matched pairs entering the regression.
    pub pairs: usize,
}

/// Displacement/benefit-gradient pairs from one deployment, matched by the
/// optimal coupling (monotone pairing in 1D).
fn displacement_pairs(
    ex_ante: &EmpiricalMeasure,
    ex_post: &EmpiricalMeasure,
    benefit: &BenefitSpec,
    seed: u64,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    if ex_ante.dim() != ex_post.dim() {
        return Err(Error::Shape("ex-ante and ex-post dimensions differ".into()));
    }
    let n = ex_ante.len().min(ex_post.len());
    if n == 0 {
        return Err(Error::EmptyData("no samples to pair".into()));
    }
    let a = if ex_ante.len() > n { ex_ante.subsample(n, seed)? } else { ex_ante.clone() };
    let b = if ex_post.len() > n { ex_post.subsample(n, seed.wrapping_add(1))? } else { ex_post.clone() };

    let d = a.dim();
    let mut xs = Vec::with_capacity(n);
    let mut bs = Vec::with_capacity(n);
    if d == 1 {
        let (_, pairing) = w2_1d(&a, &b)?;
        let pairing = pairing
            .ok_or_else(|| Error::Argument("pairing needs equal-size uniform samples".into()))?;
        for i in 0..n {
            let t = b.point(pairing[i]).to_vec();
            xs.push(vec![t[0] - a.point(i)[0]]);
            bs.push(benefit.grad(&t)?);
        }
    } else {
        let coupling = exact_coupling(&a, &b)?;
        for (i, row) in coupling.plan().iter().enumerate() {
            let mass: f64 = row.iter().sum();
            if mass <= 0.0 {
                continue;
            }
            // barycentric projection of the matched image
            let mut t = vec![0.0; d];
            for (j, &w) in row.iter().enumerate() {
                if w > 0.0 {
                    for (tc, &pc) in t.iter_mut().zip(b.point(j)) {
                        *tc += w * pc;
                    }
                }
            }
            for tc in t.iter_mut() {
                *tc /= mass;
            }
            let x: Vec<f64> = t.iter().zip(a.point(i)).map(|(ti, zi)| ti - zi).collect();
            xs.push(x);
            bs.push(benefit.grad(&t)?);
        }
    }
    Ok((xs, bs))
}

/// Least squares from stacked pairs: Sigma_hat = (X'X)^{-1} X'Y.
fn solve_regression(xs: &[Vec<f64>], bs: &[Vec<f64>]) -> Result<SigmaEstimate> {
    let n = xs.len();
    let d = xs[0].len();
    let mut gram = Matrix::zeros(d, d);
    let mut xty = Matrix::zeros(d, d);
    for (x, b) in xs.iter().zip(bs) {
        for p in 0..d {
            for q in 0..d {
                gram[(p, q)] += x[p] * x[q];
                xty[(p, q)] += x[p] * b[q];
            }
        }
    }
    let (eigs, _) = gram.sym_eigen()?;
    let min_eig = eigs[0];
    if min_eig < GRAM_MIN_EIG {
        return Err(Error::IllPosed(format!(
            "X'X has minimum eigenvalue {min_eig:.3e}; displacements do not span the space \
             (constant-gradient benefits with a single deployment do this) — vary the \
             deployments or use a benefit with non-constant gradient"
        )));
    }
    let raw = gram.solve_multi(&xty)?;
    let psd = raw.symmetrize().psd_clip(1e-8)?;
    Ok(SigmaEstimate { raw, psd, gram, gram_min_eig: min_eig, pairs: n })
}

/// Single-deployment paired regression.
pub fn estimate_sigma_paired(
    ex_ante: &EmpiricalMeasure,
    ex_post: &EmpiricalMeasure,
    benefit: &BenefitSpec,
    seed: u64,
) -> Result<SigmaEstimate> {
    let (xs, bs) = displacement_pairs(ex_ante, ex_post, benefit, seed)?;
    solve_regression(&xs, &bs)
}

/// Stacks pairs from several deployments (each its own ex-ante sample,
/// ex-post sample, and benefit) into one regression; this is what makes
/// constant-gradient benefits identifiable.
pub fn estimate_sigma_from_deployments(
    deployments: &[(EmpiricalMeasure, EmpiricalMeasure, BenefitSpec)],
    seed: u64,
) -> Result<SigmaEstimate> {
    if deployments.is_empty() {
        return Err(Error::EmptyData("no deployments".into()));
    }
    let mut xs = Vec::new();
    let mut bs = Vec::new();
    for (k, (a, b, benefit)) in deployments.iter().enumerate() {
        let (mut x, mut g) = displacement_pairs(a, b, benefit, seed.wrapping_add(k as u64))?;
        xs.append(&mut x);
        bs.append(&mut g);
    }
    solve_regression(&xs, &bs)
}
