//! Experiment configuration: one JSON document per run. Parsing is strict
//! (unknown fields are rejected) and `validate` enforces the cross-field
//! rules before anything executes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use perfcost::agents::{BenefitSpec, LinearClassifier};
use perfcost::linalg::Matrix;
use perfcost::measures::DatasetSchema;
use perfcost::potentials::PotentialModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    FitCost,
    FitMapEval,
    ConvergenceStudy,
    Optimize,
    Benchmark,
    OlsOracle,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::FitCost => "fit-cost",
            ExperimentKind::FitMapEval => "fit-map-eval",
            ExperimentKind::ConvergenceStudy => "convergence-study",
            ExperimentKind::Optimize => "optimize",
            ExperimentKind::Benchmark => "benchmark",
            ExperimentKind::OlsOracle => "ols-oracle",
        }
    }
}

/// Where ex-ante agents come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExAnteConfig {
    Gaussian { mean: Vec<f64>, cov: Matrix },
    /// exp(N(mu, sigma^2)) on the positive axis (1D pipelines).
    Lognormal1d { mu: f64, sigma: f64 },
    /// Ingest a CSV pool; fresh samples are seeded subsamples of the pool.
    Csv { path: PathBuf, schema: DatasetSchema },
    /// Bundled synthetic look-alike of the credit dataset.
    SyntheticCredit { pool: usize, standardize: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    /// Ground-truth cost potential for synthetic data generation.
    pub potential: PotentialModel,
    /// Benefit family for the 1D and net pipelines (the classification
    /// pipelines derive benefits from deployed classifiers instead).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benefit: Option<BenefitSpec>,
    /// Conditional label model (alpha*, beta*) for classification worlds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_model: Option<LinearClassifier>,
    pub ex_ante: ExAnteConfig,
}

fn default_k() -> usize {
    1
}
fn default_dep_cov() -> f64 {
    0.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Samples per distribution.
    pub n: usize,
    /// Number of deployed classifiers (ex-post distributions).
    #[serde(default = "default_k")]
    pub k: usize,
    /// Covariance scale of the Gaussian the deployed classifiers are drawn
    /// from, centered at the static optimum.
    #[serde(default = "default_dep_cov")]
    pub deployment_cov: f64,
    /// Sample-size sweep for fit-map-eval / convergence-study.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sizes: Option<Vec<usize>>,
    /// Deployment-count sweep for benchmark.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_grid: Option<Vec<usize>>,
    /// Fixed deployment slopes for convergence-study.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub betas: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitFamily {
    Quadratic,
    ConvexNet,
    Isotonic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub fit_family: FitFamily,
    pub max_outer_iters: usize,
    pub objective_tol: f64,
    pub bary_max_iter: usize,
    pub bary_tol: f64,
    pub net_hidden: usize,
    pub net_lr: f64,
    pub net_epochs: usize,
    pub net_refresh_every: usize,
    pub plugin_lr: f64,
    pub plugin_iters: usize,
    pub rgd_etas: Vec<f64>,
    pub rgd_samples_per_round: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            fit_family: FitFamily::Quadratic,
            max_outer_iters: 30,
            objective_tol: 1e-7,
            bary_max_iter: 12,
            bary_tol: 1e-9,
            net_hidden: 5,
            net_lr: 0.1,
            net_epochs: 3000,
            net_refresh_every: 50,
            plugin_lr: 0.5,
            plugin_iters: 5000,
            rgd_etas: vec![0.05, 0.2, 0.5, 1.0],
            rgd_samples_per_round: 250,
        }
    }
}

fn default_n_eval() -> usize {
    10_000
}
fn default_grid_points() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default = "default_n_eval")]
    pub n_eval: usize,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { n_eval: default_n_eval(), grid_points: default_grid_points() }
    }
}

/// Strategic-OLS closed-form parameters (ols-oracle kind).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OlsConfig {
    pub theta_star: Vec<f64>,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub out_dir: PathBuf,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub seed_offset: u64,
    pub world: WorldConfig,
    pub data: DataConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ols: Option<OlsConfig>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config does not parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: String| Err(ConfigError::Invalid(msg));
        if self.seeds.is_empty() {
            return fail("at least one seed is required".into());
        }
        if self.data.n < 5 {
            return fail(format!("data.n must be at least 5, got {}", self.data.n));
        }
        if self.data.k < 1 {
            return fail("data.k must be at least 1".into());
        }
        if let Some(sizes) = &self.data.sizes {
            if sizes.is_empty() || sizes.iter().any(|&s| s < 5) {
                return fail("data.sizes entries must be at least 5".into());
            }
        }
        if let ExAnteConfig::Csv { path, .. } = &self.world.ex_ante {
            if !path.exists() {
                return fail(format!("csv path {} does not resolve", path.display()));
            }
        }
        match self.kind {
            ExperimentKind::FitMapEval => {
                if self.world.benefit.is_none() {
                    return fail("fit-map-eval needs world.benefit".into());
                }
                if self.world.potential.dim() != 1 {
                    return fail("fit-map-eval is a 1D pipeline".into());
                }
            }
            ExperimentKind::Optimize | ExperimentKind::Benchmark => {
                if self.world.label_model.is_none() {
                    return fail(format!("{} needs world.label_model", self.kind.as_str()));
                }
                if !matches!(self.world.potential, PotentialModel::Quadratic(_)) {
                    return fail("classification pipelines need a quadratic true potential".into());
                }
            }
            ExperimentKind::OlsOracle => {
                let Some(ols) = &self.ols else {
                    return fail("ols-oracle needs the `ols` section".into());
                };
                let PotentialModel::Quadratic(q) = &self.world.potential else {
                    return fail("ols-oracle needs a quadratic potential (its M)".into());
                };
                if ols.theta_star.len() != q.dim() {
                    return fail("ols.theta_star dimension must match the potential".into());
                }
                if ols.sigma <= 0.0 {
                    return fail("ols.sigma must be positive".into());
                }
            }
            ExperimentKind::ConvergenceStudy => {
                if self.data.sizes.is_none() {
                    return fail("convergence-study needs data.sizes".into());
                }
            }
            ExperimentKind::FitCost => {
                if self.solver.fit_family == FitFamily::Isotonic && self.data.k != 1 {
                    return fail("isotonic fit-cost uses exactly one ex-post sample".into());
                }
            }
        }
        Ok(())
    }

    /// Seeds with the offset applied.
    pub fn effective_seeds(&self) -> Vec<u64> {
        self.seeds.iter().map(|s| s.wrapping_add(self.seed_offset)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(kind: &str) -> String {
        format!(
            r#"{{
  "kind": "{kind}",
  "out_dir": "/tmp/out",
  "seeds": [0, 1],
  "world": {{
    "potential": {{"family": "quadratic", "chol": [[0.3162277660168379]]}},
    "benefit": {{"variant": "power", "theta": [0.1], "exponent": "1/2"}},
    "ex_ante": {{"lognormal1d": {{"mu": -0.5, "sigma": 0.5}}}}
  }},
  "data": {{"n": 50}}
}}"#
        )
    }

    #[test]
    fn parse_serialize_parse_is_fixed_point() {
        let cfg: ExperimentConfig = serde_json::from_str(&minimal("fit-map-eval")).unwrap();
        cfg.validate().unwrap();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
        let text2 = serde_json::to_string_pretty(&back).unwrap();
        assert_eq!(text, text2);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let bad = minimal("fit-map-eval").replace("\"data\"", "\"bogus\": 1, \"data\"");
        assert!(serde_json::from_str::<ExperimentConfig>(&bad).is_err());
    }

    #[test]
    fn kind_specific_validation() {
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&minimal("fit-map-eval")).unwrap();
        cfg.kind = ExperimentKind::Optimize;
        assert!(cfg.validate().is_err(), "optimize without a label model must fail");
        cfg.kind = ExperimentKind::OlsOracle;
        assert!(cfg.validate().is_err(), "ols-oracle without `ols` must fail");
        cfg.ols = Some(OlsConfig { theta_star: vec![1.0], sigma: 1.0 });
        cfg.kind = ExperimentKind::OlsOracle;
        cfg.validate().unwrap();
    }

    #[test]
    fn seed_offset_shifts_seeds() {
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&minimal("fit-map-eval")).unwrap();
        cfg.seed_offset = 10;
        assert_eq!(cfg.effective_seeds(), vec![10, 11]);
    }
}
