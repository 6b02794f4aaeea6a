//! Performative evaluation: deploy a classifier against the true response
//! map on fresh agents and score it where it will actually live.

use serde::{Deserialize, Serialize};

use crate::agents::LinearClassifier;
use crate::error::{Error, Result};
use crate::Result as _CrateResult;

use super::plugin::{plugin_logistic, PluginOpt};
use super::world::SyntheticWorld;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerformativeMetrics {
    pub accuracy: f64,
    pub cross_entropy: f64,
    pub n_eval: usize,
    pub seed: u64,
}

/// Draws fresh ex-ante agents, applies the true response map to `theta`, and
/// scores accuracy (threshold 0.5) and mean cross-entropy on the induced
/// distribution.
pub fn evaluate_performative(
    theta: &LinearClassifier,
    world: &SyntheticWorld,
    n_eval: usize,
    seed: u64,
) -> Result<PerformativeMetrics> {
    if n_eval == 0 {
        return Err(Error::Argument("n_eval must be positive".into()));
    }
    let induced = world.deploy(theta, n_eval, seed)?;
    let mut correct = 0usize;
    let mut ce = 0.0;
    for (x, &y) in induced.measure.points().iter().zip(&induced.labels) {
        let p = theta.predict_proba(x).clamp(1e-12, 1.0 - 1e-12);
        let pred = if p >= 0.5 { 1.0 } else { 0.0 };
        if pred == y {
            correct += 1;
        }
        ce -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
    }
    Ok(PerformativeMetrics {
        accuracy: correct as f64 / n_eval as f64,
        cross_entropy: ce / n_eval as f64,
        n_eval,
        seed,
    })
}

/// Reference classifier: the plug-in optimizer run with the true cost matrix
/// on a 10x evaluation-size ex-ante sample.
pub fn oracle_classifier(
    world: &SyntheticWorld,
    n_eval: usize,
    opt: &PluginOpt,
    seed: u64,
) -> _CrateResult<LinearClassifier> {
    let m_true = world
        .true_m()
        .ok_or_else(|| Error::Argument("oracle needs a quadratic true potential".into()))?;
    let train = world.sample_ex_ante(10 * n_eval, seed)?;
    plugin_logistic(&train, &[], &[], Some(m_true), opt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::potentials::{PotentialModel, QuadraticPotential};

    fn world(label_model: LinearClassifier) -> SyntheticWorld {
        SyntheticWorld {
            potential: PotentialModel::Quadratic(
                QuadraticPotential::from_matrix(&Matrix::scaled_identity(2, 0.1)).unwrap(),
            ),
            label_model,
            ex_ante_mean: vec![0.0, 0.0],
            ex_ante_cov: Matrix::identity(2),
        }
    }

    #[test]
    fn zero_classifier_scores_log_two() {
        let w = world(LinearClassifier { alpha: 0.3, beta: vec![-0.4, 0.2] });
        let m = evaluate_performative(&LinearClassifier::zeros(2), &w, 500, 3).unwrap();
        assert!((m.cross_entropy - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn separable_world_with_matching_classifier_is_perfect() {
        // Labels effectively deterministic in x1; the evaluated classifier
        // compensates its own induced shift through the intercept.
        let big = 1e6;
        let w = world(LinearClassifier { alpha: 0.0, beta: vec![big, 0.0] });
        let m_inv = Matrix::scaled_identity(2, 10.0); // (0.1 I)^{-1}
        let beta = vec![big, 0.0];
        let abs_beta: Vec<f64> = beta.iter().map(|b| b.abs()).collect();
        let shift = m_inv.matvec(&abs_beta);
        let alpha = -(beta[0] * shift[0] + beta[1] * shift[1]);
        let clf = LinearClassifier { alpha, beta };
        let m = evaluate_performative(&clf, &w, 400, 5).unwrap();
        assert!(m.accuracy > 0.999, "accuracy {}", m.accuracy);
    }

    #[test]
    fn oracle_beats_zero_classifier() {
        let w = world(LinearClassifier { alpha: 0.4, beta: vec![-1.2, -0.6] });
        let oracle = oracle_classifier(&w, 500, &PluginOpt::default(), 11).unwrap();
        let mo = evaluate_performative(&oracle, &w, 4000, 12).unwrap();
        let mz = evaluate_performative(&LinearClassifier::zeros(2), &w, 4000, 12).unwrap();
        assert!(
            mo.cross_entropy < mz.cross_entropy - 0.01,
            "oracle {} vs zero {}",
            mo.cross_entropy,
            mz.cross_entropy
        );
    }
}
