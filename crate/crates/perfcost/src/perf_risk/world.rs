//! Semi-synthetic worlds for the classification experiments: a known
//! Bregman cost, a fixed conditional label model, and a Gaussian ex-ante
//! distribution. Deployed classifiers induce ex-post samples through the
//! agents' best response; labels ride along unchanged.

use serde::{Deserialize, Serialize};

use crate::agents::{respond_measure, BenefitSpec, LinearClassifier};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::measures::{sample_gaussian, EmpiricalMeasure};
use crate::potentials::PotentialModel;
use crate::rng::Rng;

/// A measure together with binary labels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabeledData {
    pub measure: EmpiricalMeasure,
    pub labels: Vec<f64>,
}

impl LabeledData {
    pub fn new(measure: EmpiricalMeasure, labels: Vec<f64>) -> Result<Self> {
        if labels.len() != measure.len() {
            return Err(Error::Shape("labels and measure lengths differ".into()));
        }
        if labels.iter().any(|&y| y != 0.0 && y != 1.0) {
            return Err(Error::Argument("labels must be 0/1".into()));
        }
        Ok(LabeledData { measure, labels })
    }

    pub fn len(&self) -> usize {
        self.measure.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measure.is_empty()
    }
}

/// Ground-truth world for performative classification.
#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub potential: PotentialModel,
    /// Fixed (alpha*, beta*): Y ~ Bernoulli(logistic(alpha* + beta*' x)) at
    /// the agent's pre-response features.
    pub label_model: LinearClassifier,
    pub ex_ante_mean: Vec<f64>,
    pub ex_ante_cov: Matrix,
}

impl SyntheticWorld {
    pub fn dim(&self) -> usize {
        self.ex_ante_mean.len()
    }

    /// The benefit a published classifier induces: B(x) = |beta|' x.
    pub fn benefit_for(&self, clf: &LinearClassifier) -> BenefitSpec {
        BenefitSpec::AbsLinear { beta: clf.beta.clone() }
    }

    /// The cost matrix when the true potential is quadratic.
    pub fn true_m(&self) -> Option<&Matrix> {
        match &self.potential {
            PotentialModel::Quadratic(q) => Some(q.matrix()),
            _ => None,
        }
    }

    fn draw_labels(&self, measure: &EmpiricalMeasure, seed: u64) -> Vec<f64> {
        let mut rng = Rng::derive(seed, 0xBEEF);
        measure
            .points()
            .iter()
            .map(|x| {
                let p = self.label_model.predict_proba(x);
                if rng.next_f64() < p {
                    1.0
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Fresh labeled ex-ante sample.
    pub fn sample_ex_ante(&self, n: usize, seed: u64) -> Result<LabeledData> {
        let measure = sample_gaussian(&self.ex_ante_mean, &self.ex_ante_cov, n, seed)?;
        let labels = self.draw_labels(&measure, seed);
        LabeledData::new(measure, labels)
    }

    /// Publishes `clf`: fresh agents respond to it; labels are drawn at the
    /// pre-response features and are not changed by manipulation.
    pub fn deploy(&self, clf: &LinearClassifier, n: usize, seed: u64) -> Result<LabeledData> {
        let before = self.sample_ex_ante(n, seed)?;
        let benefit = self.benefit_for(clf);
        let after = respond_measure(&self.potential, &benefit, &before.measure)?;
        LabeledData::new(after, before.labels)
    }

    /// Deployed classifiers sampled componentwise N(center, cov_scale).
    pub fn sample_classifiers(
        &self,
        center: &LinearClassifier,
        count: usize,
        cov_scale: f64,
        seed: u64,
    ) -> Vec<LinearClassifier> {
        let mut rng = Rng::derive(seed, 0xC1A5);
        let sd = cov_scale.sqrt();
        (0..count)
            .map(|_| {
                let alpha = center.alpha + sd * rng.next_normal_pair().0;
                let beta: Vec<f64> = center
                    .beta
                    .iter()
                    .map(|b| b + sd * rng.next_normal_pair().0)
                    .collect();
                LinearClassifier { alpha, beta }
            })
            .collect()
    }
}
