//! Runtime world assembled from a config: a ground-truth potential, an
//! ex-ante source (parametric or a data pool), an optional label model, and
//! the deployment machinery shared by every experiment kind.

use perfcost::agents::{respond_measure, BenefitSpec, LinearClassifier};
use perfcost::error::{Error, Result};
use perfcost::linalg::Matrix;
use perfcost::measures::{from_csv, pushforward, sample_gaussian, EmpiricalMeasure};
use perfcost::perf_risk::LabeledData;
use perfcost::potentials::PotentialModel;
use perfcost::rng::Rng;

use crate::config::{ExAnteConfig, WorldConfig};
use crate::synth;

enum Source {
    Gaussian { mean: Vec<f64>, cov: Matrix },
    Lognormal1d { mu: f64, sigma: f64 },
    Pool(LabeledData),
}

pub struct RunWorld {
    pub potential: PotentialModel,
    pub label_model: Option<LinearClassifier>,
    pub benefit: Option<BenefitSpec>,
    source: Source,
}

impl RunWorld {
    pub fn from_config(cfg: &WorldConfig) -> Result<Self> {
        let source = match &cfg.ex_ante {
            ExAnteConfig::Gaussian { mean, cov } => {
                Source::Gaussian { mean: mean.clone(), cov: cov.clone() }
            }
            ExAnteConfig::Lognormal1d { mu, sigma } => {
                Source::Lognormal1d { mu: *mu, sigma: *sigma }
            }
            ExAnteConfig::Csv { path, schema } => {
                let ingest = from_csv(path, schema)?;
                let labels = ingest
                    .labels
                    .unwrap_or_else(|| vec![0.0; ingest.measure.len()]);
                Source::Pool(LabeledData::new(ingest.measure, labels)?)
            }
            ExAnteConfig::SyntheticCredit { pool, standardize } => {
                let data = synth::sample_credit(*pool, 0xC0FFEE)?;
                let data = if *standardize { synth::standardize(&data)?.0 } else { data };
                Source::Pool(data)
            }
        };
        let world = RunWorld {
            potential: cfg.potential.clone(),
            label_model: cfg.label_model.clone(),
            benefit: cfg.benefit.clone(),
            source,
        };
        if world.dim() != world.potential.dim() {
            return Err(Error::Shape(format!(
                "ex-ante dimension {} vs potential dimension {}",
                world.dim(),
                world.potential.dim()
            )));
        }
        Ok(world)
    }

    pub fn dim(&self) -> usize {
        match &self.source {
            Source::Gaussian { mean, .. } => mean.len(),
            Source::Lognormal1d { .. } => 1,
            Source::Pool(p) => p.measure.dim(),
        }
    }

    pub fn pool_size(&self) -> Option<usize> {
        match &self.source {
            Source::Pool(p) => Some(p.measure.len()),
            _ => None,
        }
    }

    pub fn true_m(&self) -> Option<&Matrix> {
        match &self.potential {
            PotentialModel::Quadratic(q) => Some(q.matrix()),
            _ => None,
        }
    }

    /// Fresh labeled ex-ante agents: sampled for parametric sources, a
    /// seeded subsample for pools (whose labels ride along).
    pub fn sample_ex_ante(&self, n: usize, seed: u64) -> Result<LabeledData> {
        match &self.source {
            Source::Gaussian { mean, cov } => {
                let measure = sample_gaussian(mean, cov, n, seed)?;
                let labels = self.draw_labels(&measure, seed)?;
                LabeledData::new(measure, labels)
            }
            Source::Lognormal1d { mu, sigma } => {
                let base = sample_gaussian(&[*mu], &Matrix::diag(&[sigma * sigma]), n, seed)?;
                let measure = pushforward(&base, |p| vec![p[0].exp()])?;
                let labels = self.draw_labels(&measure, seed)?;
                LabeledData::new(measure, labels)
            }
            Source::Pool(pool) => {
                if n > pool.measure.len() {
                    return Err(Error::InsufficientData { need: n, got: pool.measure.len() });
                }
                let mut rng = Rng::derive(seed, 0x9001);
                let idx = rng.sample_indices(pool.measure.len(), n);
                let points: Vec<Vec<f64>> =
                    idx.iter().map(|&i| pool.measure.point(i).to_vec()).collect();
                let labels: Vec<f64> = idx.iter().map(|&i| pool.labels[i]).collect();
                LabeledData::new(EmpiricalMeasure::from_points(points)?, labels)
            }
        }
    }

    fn draw_labels(&self, measure: &EmpiricalMeasure, seed: u64) -> Result<Vec<f64>> {
        match &self.label_model {
            Some(model) => {
                let mut rng = Rng::derive(seed, 0xBEEF);
                Ok(measure
                    .points()
                    .iter()
                    .map(|x| {
                        if rng.next_f64() < model.predict_proba(x) {
                            1.0
                        } else {
                            0.0
                        }
                    })
                    .collect())
            }
            None => Ok(vec![0.0; measure.len()]),
        }
    }

    /// The benefit a deployed classifier induces.
    pub fn benefit_for(&self, clf: &LinearClassifier) -> BenefitSpec {
        BenefitSpec::AbsLinear { beta: clf.beta.clone() }
    }

    /// Publishes a classifier: fresh agents respond to it under the true
    /// cost; labels stay attached to the agent.
    pub fn deploy(&self, clf: &LinearClassifier, n: usize, seed: u64) -> Result<LabeledData> {
        let before = self.sample_ex_ante(n, seed)?;
        let after = respond_measure(&self.potential, &self.benefit_for(clf), &before.measure)?;
        LabeledData::new(after, before.labels)
    }

    /// Ex-post sample under the world's configured benefit (1D and net
    /// pipelines): fresh agents respond under `benefit`.
    pub fn deploy_benefit(&self, benefit: &BenefitSpec, n: usize, seed: u64) -> Result<LabeledData> {
        let before = self.sample_ex_ante(n, seed)?;
        let after = respond_measure(&self.potential, benefit, &before.measure)?;
        LabeledData::new(after, before.labels)
    }

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

    /// True derivative of the potential at a 1D point (for phi' overlays).
    pub fn true_phi_prime_1d(&self, t: f64) -> Result<f64> {
        Ok(perfcost::potentials::grad_potential(&self.potential, &[t])?[0])
    }

    /// Quantile range of the ex-ante distribution for fixed evaluation
    /// grids: analytic for parametric sources, empirical for pools.
    pub fn ex_ante_quantiles_1d(&self, lo: f64, hi: f64) -> Result<(f64, f64)> {
        fn normal_quantile(p: f64) -> f64 {
            // Acklam's rational approximation; plenty for grid endpoints.
            let a = [
                -3.969683028665376e+01,
                2.209460984245205e+02,
                -2.759285104469687e+02,
                1.383577518672690e+02,
                -3.066479806614716e+01,
                2.506628277459239e+00,
            ];
            let b = [
                -5.447609879822406e+01,
                1.615858368580409e+02,
                -1.556989798598866e+02,
                6.680131188771972e+01,
                -1.328068155288572e+01,
            ];
            let c = [
                -7.784894002430293e-03,
                -3.223964580411365e-01,
                -2.400758277161838e+00,
                -2.549732539343734e+00,
                4.374664141464968e+00,
                2.938163982698783e+00,
            ];
            let d = [
                7.784695709041462e-03,
                3.224671290700398e-01,
                2.445134137142996e+00,
                3.754408661907416e+00,
            ];
            let plow = 0.02425;
            if p < plow {
                let q = (-2.0 * p.ln()).sqrt();
                (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5])
                    / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
            } else if p <= 1.0 - plow {
                let q = p - 0.5;
                let r = q * q;
                (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q
                    / (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
            } else {
                -normal_quantile(1.0 - p)
            }
        }
        match &self.source {
            Source::Lognormal1d { mu, sigma } => {
                Ok(((mu + sigma * normal_quantile(lo)).exp(), (mu + sigma * normal_quantile(hi)).exp()))
            }
            Source::Gaussian { mean, cov } => {
                if mean.len() != 1 {
                    return Err(Error::Shape("1D quantiles need a 1D source".into()));
                }
                let sd = cov[(0, 0)].sqrt();
                Ok((mean[0] + sd * normal_quantile(lo), mean[0] + sd * normal_quantile(hi)))
            }
            Source::Pool(pool) => {
                if pool.measure.dim() != 1 {
                    return Err(Error::Shape("1D quantiles need a 1D source".into()));
                }
                let mut vals: Vec<f64> = pool.measure.points().iter().map(|p| p[0]).collect();
                vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let pick = |p: f64| vals[((p * (vals.len() - 1) as f64).round() as usize).min(vals.len() - 1)];
                Ok((pick(lo), pick(hi)))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExAnteConfig;
    use perfcost::potentials::QuadraticPotential;

    fn quad1(sigma: f64) -> PotentialModel {
        PotentialModel::Quadratic(
            QuadraticPotential::from_matrix(&Matrix::diag(&[sigma])).unwrap(),
        )
    }

    #[test]
    fn lognormal_source_is_positive_and_deterministic() {
        let cfg = WorldConfig {
            potential: quad1(0.1),
            benefit: None,
            label_model: None,
            ex_ante: ExAnteConfig::Lognormal1d { mu: -0.5, sigma: 0.5 },
        };
        let w = RunWorld::from_config(&cfg).unwrap();
        let a = w.sample_ex_ante(50, 3).unwrap();
        let b = w.sample_ex_ante(50, 3).unwrap();
        assert_eq!(a.measure, b.measure);
        assert!(a.measure.points().iter().all(|p| p[0] > 0.0));
        let (q10, q90) = w.ex_ante_quantiles_1d(0.1, 0.9).unwrap();
        assert!(q10 > 0.0 && q90 > q10);
    }

    #[test]
    fn pool_source_subsamples_with_labels() {
        let cfg = WorldConfig {
            potential: quad1(0.1),
            benefit: None,
            label_model: None,
            ex_ante: ExAnteConfig::SyntheticCredit { pool: 200, standardize: false },
        };
        // 3-feature pool vs 1D potential must be rejected
        assert!(RunWorld::from_config(&cfg).is_err());

        let cfg3 = WorldConfig {
            potential: PotentialModel::Quadratic(
                QuadraticPotential::from_matrix(&Matrix::scaled_identity(3, 0.1)).unwrap(),
            ),
            benefit: None,
            label_model: None,
            ex_ante: ExAnteConfig::SyntheticCredit { pool: 200, standardize: true },
        };
        let w = RunWorld::from_config(&cfg3).unwrap();
        let d = w.sample_ex_ante(60, 1).unwrap();
        assert_eq!(d.measure.len(), 60);
        assert!(w.sample_ex_ante(201, 1).is_err());
    }
}
