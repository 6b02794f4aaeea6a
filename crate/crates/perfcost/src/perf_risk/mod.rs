//! Downstream consumers of estimated response maps: strategic-OLS closed
//! forms, plug-in performative risk minimization, repeated-gradient and
//! least-squares baselines, and performative evaluation.

mod eval;
mod ls;
mod ols;
mod plugin;
mod rgd;
mod world;

pub use eval::{evaluate_performative, oracle_classifier, PerformativeMetrics};
pub use ls::{ls_baseline, LsBaselineFit};
pub use ols::{
    misspecified_opt_scale, monte_carlo_ols_pr, ols_regret_of_misspecification, strategic_ols_pr,
    OlsWorld,
};
pub use plugin::{ordinary_logistic, plugin_logistic, plugin_objective, PluginOpt};
pub use rgd::rgd;
pub use world::{LabeledData, SyntheticWorld};
