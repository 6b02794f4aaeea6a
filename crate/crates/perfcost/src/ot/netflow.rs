//! Exact transportation solver for general (non-uniform) weights:
//! successive shortest augmenting paths with node potentials on the dense
//! bipartite graph. Each augmentation saturates a supply, a demand, or a
//! residual arc, so termination is finite; potentials keep every Dijkstra
//! pass on nonnegative reduced costs.

use crate::error::{Error, Result};

const MASS_EPS: f64 = 1e-13;

/// Computes an optimal transport plan between supplies `a` and demands `b`
/// under `cost(i, j)`. Supplies and demands must be nonnegative with equal
/// totals up to 1e-9; the unmatched residual (at most that slack) is left
/// unshipped.
pub fn transport(a: &[f64], b: &[f64], cost: impl Fn(usize, usize) -> f64) -> Result<Vec<Vec<f64>>> {
    let n = a.len();
    let m = b.len();
    let total_a: f64 = a.iter().sum();
    let total_b: f64 = b.iter().sum();
    if (total_a - total_b).abs() > 1e-9 {
        return Err(Error::Argument(format!(
            "unbalanced transport problem: supply {total_a} vs demand {total_b}"
        )));
    }

    let c: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..m).map(|j| cost(i, j)).collect())
        .collect();
    let mut plan = vec![vec![0.0_f64; m]; n];
    let mut supply = a.to_vec();
    let mut demand = b.to_vec();
    let mut pot_u = vec![0.0_f64; n];
    let mut pot_v = vec![0.0_f64; m];

    // parent encoding for the augmenting path
    #[derive(Clone, Copy, PartialEq)]
    enum Parent {
        Root,
        FromSource(usize), // sink j was reached from source i
        FromSink(usize),   // source i was reached from sink j via residual arc
    }

    let max_phases = 4 * (n + m) + 64;
    for _phase in 0..max_phases {
        if supply.iter().all(|&s| s <= MASS_EPS) {
            return Ok(plan);
        }
        // Multi-source Dijkstra over reduced costs.
        let mut dist_u = vec![f64::INFINITY; n];
        let mut dist_v = vec![f64::INFINITY; m];
        let mut par_u = vec![Parent::Root; n];
        let mut par_v = vec![Parent::Root; m];
        let mut done_u = vec![false; n];
        let mut done_v = vec![false; m];
        for i in 0..n {
            if supply[i] > MASS_EPS {
                dist_u[i] = 0.0;
            }
        }
        loop {
            // pick the closest unfinished node, sources first on ties
            let mut best = f64::INFINITY;
            let mut pick: Option<(bool, usize)> = None;
            for i in 0..n {
                if !done_u[i] && dist_u[i] < best {
                    best = dist_u[i];
                    pick = Some((true, i));
                }
            }
            for j in 0..m {
                if !done_v[j] && dist_v[j] < best {
                    best = dist_v[j];
                    pick = Some((false, j));
                }
            }
            let Some((is_source, idx)) = pick else { break };
            if is_source {
                let i = idx;
                done_u[i] = true;
                for j in 0..m {
                    if done_v[j] {
                        continue;
                    }
                    let reduced = c[i][j] + pot_u[i] - pot_v[j];
                    let nd = dist_u[i] + reduced;
                    if nd < dist_v[j] {
                        dist_v[j] = nd;
                        par_v[j] = Parent::FromSource(i);
                    }
                }
            } else {
                let j = idx;
                done_v[j] = true;
                for i in 0..n {
                    if done_u[i] || plan[i][j] <= MASS_EPS {
                        continue;
                    }
                    let reduced = -c[i][j] + pot_v[j] - pot_u[i];
                    let nd = dist_v[j] + reduced;
                    if nd < dist_u[i] {
                        dist_u[i] = nd;
                        par_u[i] = Parent::FromSink(j);
                    }
                }
            }
        }
        // Target: nearest sink with remaining demand.
        let mut target = None;
        let mut best = f64::INFINITY;
        for j in 0..m {
            if demand[j] > MASS_EPS && dist_v[j] < best {
                best = dist_v[j];
                target = Some(j);
            }
        }
        let Some(target) = target else {
            // Supply remains but no reachable demand: only the balance slack is left.
            return Ok(plan);
        };

        // Bottleneck along the path.
        let mut delta = demand[target];
        let mut j = target;
        loop {
            match par_v[j] {
                Parent::FromSource(i) => {
                    match par_u[i] {
                        Parent::Root => {
                            delta = delta.min(supply[i]);
                            break;
                        }
                        Parent::FromSink(jprev) => {
                            delta = delta.min(plan[i][jprev]);
                            j = jprev;
                        }
                        Parent::FromSource(_) => unreachable!("source parented by source"),
                    }
                }
                _ => unreachable!("sink without source parent on path"),
            }
        }
        // Apply the augmentation.
        let mut j = target;
        loop {
            match par_v[j] {
                Parent::FromSource(i) => {
                    plan[i][j] += delta;
                    match par_u[i] {
                        Parent::Root => {
                            supply[i] -= delta;
                            break;
                        }
                        Parent::FromSink(jprev) => {
                            plan[i][jprev] -= delta;
                            j = jprev;
                        }
                        Parent::FromSource(_) => unreachable!(),
                    }
                }
                _ => unreachable!(),
            }
        }
        demand[target] -= delta;
        // Make reduced costs nonnegative for the next phase.
        let reach_max = dist_u
            .iter()
            .chain(dist_v.iter())
            .filter(|d| d.is_finite())
            .fold(0.0_f64, |acc, &d| acc.max(d));
        for i in 0..n {
            pot_u[i] += if dist_u[i].is_finite() { dist_u[i] } else { reach_max };
        }
        for j in 0..m {
            pot_v[j] += if dist_v[j].is_finite() { dist_v[j] } else { reach_max };
        }
    }
    Err(Error::Optimization(
        "transportation solver exceeded its phase budget".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan_cost(plan: &[Vec<f64>], cost: &dyn Fn(usize, usize) -> f64) -> f64 {
        plan.iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().enumerate().map(move |(j, &p)| p * cost(i, j)))
            .sum()
    }

    #[test]
    fn uniform_matches_assignment() {
        let mut rng = crate::rng::Rng::seed_from_u64(5);
        for n in 2..=6 {
            let pts_a: Vec<f64> = (0..n).map(|_| rng.next_f64()).collect();
            let pts_b: Vec<f64> = (0..n).map(|_| rng.next_f64()).collect();
            let cost = |i: usize, j: usize| (pts_a[i] - pts_b[j]).powi(2);
            let w = vec![1.0 / n as f64; n];
            let plan = transport(&w, &w, cost).unwrap();
            let assign = super::super::assignment::solve_assignment(n, cost);
            let best: f64 = (0..n).map(|i| cost(i, assign[i])).sum::<f64>() / n as f64;
            assert!((plan_cost(&plan, &cost) - best).abs() < 1e-12);
        }
    }

    #[test]
    fn respects_general_weights() {
        // One heavy source must split across two sinks.
        let a = [0.75, 0.25];
        let b = [0.5, 0.5];
        let c = [[0.0, 1.0], [1.0, 0.0]];
        let plan = transport(&a, &b, |i, j| c[i][j]).unwrap();
        assert!((plan[0][0] - 0.5).abs() < 1e-12);
        assert!((plan[0][1] - 0.25).abs() < 1e-12);
        assert!((plan[1][1] - 0.25).abs() < 1e-12);
        assert!(plan[1][0].abs() < 1e-12);
    }

    #[test]
    fn rejects_unbalanced() {
        assert!(transport(&[1.0], &[0.5], |_, _| 0.0).is_err());
    }
}
