//! Plug-in performative logistic regression: recover pre-response features
//! of ex-post samples through the inverse estimated map, then minimize the
//! performative cross-entropy in which every candidate classifier anticipates
//! its own induced shift.

use crate::agents::LinearClassifier;
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::rng::Rng;

use super::world::LabeledData;

const PROB_CLIP: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct PluginOpt {
    pub lr: f64,
    pub iters: usize,
    pub seed: u64,
}

impl Default for PluginOpt {
    fn default() -> Self {
        PluginOpt { lr: 0.5, iters: 5_000, seed: 0 }
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn cross_entropy_term(p: f64, y: f64) -> f64 {
    let p = p.clamp(PROB_CLIP, 1.0 - PROB_CLIP);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Training row: recovered pre-response features plus label.
struct Row {
    x: Vec<f64>,
    y: f64,
}

/// Unnormalized performative cross-entropy of theta = (alpha, beta) on rows
/// whose features will shift by -m_inv beta once theta is deployed.
fn plugin_loss(rows: &[Row], alpha: f64, beta: &[f64], m_inv: Option<&Matrix>) -> f64 {
    let q = match m_inv {
        Some(mi) => dot(beta, &mi.matvec(beta)),
        None => 0.0,
    };
    rows.iter()
        .map(|r| cross_entropy_term(sigmoid(alpha + dot(beta, &r.x) - q), r.y))
        .sum()
}

/// Minimizes the plug-in performative cross-entropy by full-batch gradient
/// descent with the exact analytic gradient. `m_hat = None` disables
/// response anticipation (plain pooled logistic regression).
pub fn plugin_logistic(
    ex_ante: &LabeledData,
    ex_posts: &[LabeledData],
    deployed: &[LinearClassifier],
    m_hat: Option<&Matrix>,
    opt: &PluginOpt,
) -> Result<LinearClassifier> {
    if ex_posts.len() != deployed.len() {
        return Err(Error::Argument(format!(
            "{} ex-post samples but {} deployed classifiers",
            ex_posts.len(),
            deployed.len()
        )));
    }
    let d = ex_ante.measure.dim();
    let m_inv = match m_hat {
        Some(m) => {
            if m.nrows() != d {
                return Err(Error::Shape("M_hat dimension mismatch".into()));
            }
            Some(m.inverse()?.symmetrize())
        }
        None => None,
    };

    let mut rows: Vec<Row> = Vec::with_capacity(
        ex_ante.len() + ex_posts.iter().map(|e| e.len()).sum::<usize>(),
    );
    for (x, &y) in ex_ante.measure.points().iter().zip(&ex_ante.labels) {
        rows.push(Row { x: x.clone(), y });
    }
    for (data, clf) in ex_posts.iter().zip(deployed) {
        if data.measure.dim() != d {
            return Err(Error::Shape("ex-post dimension mismatch".into()));
        }
        // X_hat = T_{theta_k}^{-1}(X') = X' + M_hat^{-1} beta_k
        let shift: Vec<f64> = match &m_inv {
            Some(mi) => mi.matvec(&clf.beta),
            None => vec![0.0; d],
        };
        for (x, &y) in data.measure.points().iter().zip(&data.labels) {
            rows.push(Row { x: x.iter().zip(&shift).map(|(a, s)| a + s).collect(), y });
        }
    }
    if rows.iter().any(|r| r.y != 0.0 && r.y != 1.0) {
        return Err(Error::Argument("labels must be 0/1".into()));
    }

    let n_total = rows.len() as f64;
    let mut rng = Rng::derive(opt.seed, 0x9D);
    let mut alpha = 1e-3 * rng.next_normal_pair().0;
    let mut beta: Vec<f64> = (0..d).map(|_| 1e-3 * rng.next_normal_pair().0).collect();

    // The candidate's own anticipated shift -M_hat^{-1} beta is constant
    // across samples, so it only offsets the intercept: with
    // alpha~ = alpha - beta' M_hat^{-1} beta the objective is plain convex
    // logistic regression on the recovered features. Descend there and map
    // the intercept back at the end.
    let mut step = opt.lr;
    let mut loss = plugin_loss(&rows, alpha, &beta, None);
    for _ in 0..opt.iters {
        let mut g_alpha = 0.0;
        let mut g_beta = vec![0.0; d];
        for r in &rows {
            let p = sigmoid(alpha + dot(&beta, &r.x));
            let e = p - r.y;
            g_alpha += e;
            for j in 0..d {
                g_beta[j] += e * r.x[j];
            }
        }
        let grad_sq = (g_alpha * g_alpha + dot(&g_beta, &g_beta)) / (n_total * n_total);
        if grad_sq.sqrt() < 1e-9 {
            break;
        }
        let mut accepted = false;
        for _ in 0..60 {
            let cand_alpha = alpha - step * g_alpha / n_total;
            let cand_beta: Vec<f64> = beta
                .iter()
                .zip(&g_beta)
                .map(|(b, g)| b - step * g / n_total)
                .collect();
            let cand_loss = plugin_loss(&rows, cand_alpha, &cand_beta, None);
            if cand_loss.is_finite() && cand_loss <= loss - 1e-4 * step * grad_sq * n_total {
                alpha = cand_alpha;
                beta = cand_beta;
                loss = cand_loss;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        step = (step * 2.0).min(opt.lr.max(1.0) * 4096.0);
        if !alpha.is_finite() || beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::LearningRate(
                "plug-in logistic diverged; lower lr or check probability clipping".into(),
            ));
        }
    }
    if !loss.is_finite() {
        return Err(Error::LearningRate("non-finite plug-in loss".into()));
    }
    if let Some(mi) = &m_inv {
        alpha += dot(&beta, &mi.matvec(&beta));
    }
    LinearClassifier::new(alpha, beta)
}

/// Plain pooled logistic regression (no response anticipation).
pub fn ordinary_logistic(data: &[&LabeledData], opt: &PluginOpt) -> Result<LinearClassifier> {
    if data.is_empty() {
        return Err(Error::EmptyData("no data for logistic regression".into()));
    }
    let mut pooled_points = Vec::new();
    let mut pooled_labels = Vec::new();
    for d in data {
        pooled_points.extend(d.measure.points().iter().cloned());
        pooled_labels.extend(d.labels.iter().copied());
    }
    let pooled = LabeledData::new(
        crate::measures::EmpiricalMeasure::from_points(pooled_points)?,
        pooled_labels,
    )?;
    plugin_logistic(&pooled, &[], &[], None, opt)
}

/// Unnormalized performative cross-entropy value for external reporting.
pub fn plugin_objective(
    ex_ante: &LabeledData,
    ex_posts: &[LabeledData],
    deployed: &[LinearClassifier],
    m_hat: Option<&Matrix>,
    clf: &LinearClassifier,
) -> Result<f64> {
    let d = ex_ante.measure.dim();
    let m_inv = match m_hat {
        Some(m) => Some(m.inverse()?.symmetrize()),
        None => None,
    };
    let mut rows: Vec<Row> = Vec::new();
    for (x, &y) in ex_ante.measure.points().iter().zip(&ex_ante.labels) {
        rows.push(Row { x: x.clone(), y });
    }
    for (data, dep) in ex_posts.iter().zip(deployed) {
        let shift: Vec<f64> = match &m_inv {
            Some(mi) => mi.matvec(&dep.beta),
            None => vec![0.0; d],
        };
        for (x, &y) in data.measure.points().iter().zip(&data.labels) {
            rows.push(Row { x: x.iter().zip(&shift).map(|(a, s)| a + s).collect(), y });
        }
    }
    Ok(plugin_loss(&rows, clf.alpha, &clf.beta, m_inv.as_ref()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::EmpiricalMeasure;

    fn toy_data(seed: u64, n: usize) -> LabeledData {
        let mut rng = Rng::seed_from_u64(seed);
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n {
            let x = vec![rng.next_normal_pair().0, rng.next_normal_pair().0];
            let p = sigmoid(0.5 - 1.5 * x[0] + 0.7 * x[1]);
            labels.push(if rng.next_f64() < p { 1.0 } else { 0.0 });
            pts.push(x);
        }
        LabeledData::new(EmpiricalMeasure::from_points(pts).unwrap(), labels).unwrap()
    }

    #[test]
    fn recovers_logistic_parameters_roughly() {
        let data = toy_data(3, 3000);
        let clf = plugin_logistic(&data, &[], &[], None, &PluginOpt::default()).unwrap();
        assert!((clf.alpha - 0.5).abs() < 0.2, "alpha {}", clf.alpha);
        assert!((clf.beta[0] + 1.5).abs() < 0.25, "beta0 {}", clf.beta[0]);
        assert!((clf.beta[1] - 0.7).abs() < 0.25, "beta1 {}", clf.beta[1]);
    }

    #[test]
    fn anticipation_matches_plain_fit_up_to_intercept() {
        // With a constant response shift, the anticipated loss only
        // reparameterizes the intercept: minima must agree in value, slopes
        // must agree directly.
        let data = toy_data(5, 1200);
        let m_hat = Matrix::scaled_identity(2, 0.5);
        let opt = PluginOpt { iters: 40_000, lr: 0.8, seed: 1 };
        let with = plugin_logistic(&data, &[], &[], Some(&m_hat), &opt).unwrap();
        let without = plugin_logistic(&data, &[], &[], None, &opt).unwrap();
        for (a, b) in with.beta.iter().zip(&without.beta) {
            assert!((a - b).abs() < 1e-3, "betas {a} vs {b}");
        }
        let loss_with = plugin_objective(&data, &[], &[], Some(&m_hat), &with).unwrap();
        let loss_without = plugin_objective(&data, &[], &[], None, &without).unwrap();
        assert!(
            (loss_with - loss_without).abs() / loss_without < 1e-6,
            "{loss_with} vs {loss_without}"
        );
        // intercept shifted by q(beta) = beta' M^{-1} beta
        let q = dot(&with.beta, &m_hat.inverse().unwrap().matvec(&with.beta));
        assert!((with.alpha - without.alpha - q).abs() < 2e-3);
    }

    #[test]
    fn zero_shift_deployments_reduce_to_pooled_logistic() {
        let a = toy_data(7, 400);
        let b = toy_data(8, 400);
        let zero_clf = LinearClassifier::zeros(2);
        let m_hat = Matrix::scaled_identity(2, 0.3);
        let opt = PluginOpt { iters: 40_000, lr: 0.8, seed: 2 };
        let plugin = plugin_logistic(&a, &[b.clone()], &[zero_clf], Some(&m_hat), &opt).unwrap();
        let plain = ordinary_logistic(&[&a, &b], &opt).unwrap();
        // compare achieved pooled losses (the anticipation term is absorbed
        // by the intercept, so the optimal values coincide)
        let pooled_plugin = plugin_objective(
            &a,
            &[b.clone()],
            &[LinearClassifier::zeros(2)],
            Some(&m_hat),
            &plugin,
        )
        .unwrap();
        let pooled_plain =
            plugin_objective(&a, &[b], &[LinearClassifier::zeros(2)], None, &plain).unwrap();
        assert!(
            (pooled_plugin - pooled_plain).abs() / pooled_plain < 1e-6,
            "{pooled_plugin} vs {pooled_plain}"
        );
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let data = toy_data(9, 60);
        let m_hat = Matrix::from_rows(&[vec![0.4, 0.1], vec![0.1, 0.3]]);
        let m_inv = m_hat.inverse().unwrap().symmetrize();
        let rows: Vec<Row> = data
            .measure
            .points()
            .iter()
            .zip(&data.labels)
            .map(|(x, &y)| Row { x: x.clone(), y })
            .collect();
        let alpha = 0.3;
        let beta = vec![-0.8, 0.4];
        // analytic
        let q = dot(&beta, &m_inv.matvec(&beta));
        let grad_q: Vec<f64> = m_inv.matvec(&beta).iter().map(|v| 2.0 * v).collect();
        let mut g_alpha = 0.0;
        let mut g_beta = vec![0.0; 2];
        for r in &rows {
            let p = sigmoid(alpha + dot(&beta, &r.x) - q);
            let e = p - r.y;
            g_alpha += e;
            for j in 0..2 {
                g_beta[j] += e * (r.x[j] - grad_q[j]);
            }
        }
        // finite differences on the loss
        let h = 1e-6;
        let fd_alpha = (plugin_loss(&rows, alpha + h, &beta, Some(&m_inv))
            - plugin_loss(&rows, alpha - h, &beta, Some(&m_inv)))
            / (2.0 * h);
        assert!((g_alpha - fd_alpha).abs() / fd_alpha.abs().max(1.0) < 1e-5);
        for j in 0..2 {
            let mut bp = beta.clone();
            let mut bm = beta.clone();
            bp[j] += h;
            bm[j] -= h;
            let fd = (plugin_loss(&rows, alpha, &bp, Some(&m_inv))
                - plugin_loss(&rows, alpha, &bm, Some(&m_inv)))
                / (2.0 * h);
            assert!(
                (g_beta[j] - fd).abs() / fd.abs().max(1.0) < 1e-5,
                "beta {j}: {} vs {fd}",
                g_beta[j]
            );
        }
    }
}
