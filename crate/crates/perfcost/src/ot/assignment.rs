//! Exact minimum-cost assignment via shortest augmenting paths with
//! potentials (Jonker-Volgenant style), O(n^3).

/// Solves the square assignment problem for a row-major n*n cost matrix.
/// Returns `row_to_col`. Ties in the Dijkstra step resolve to the lowest
/// column index, which makes equal-cost matchings deterministic.
pub fn solve_assignment_matrix(n: usize, cost: &[f64]) -> Vec<usize> {
    const NONE: usize = usize::MAX;
    debug_assert_eq!(cost.len(), n * n);
    let virt = n; // virtual column used to seed each augmentation
    let mut u = vec![0.0_f64; n + 1]; // row potentials (indexed by assigned row)
    let mut v = vec![0.0_f64; n + 1];
    let mut col_row = vec![NONE; n + 1]; // col_row[j] = row currently assigned to column j
    let mut min_to = vec![0.0_f64; n + 1];
    let mut prev = vec![0usize; n + 1];
    let mut used = vec![false; n + 1];

    for row in 0..n {
        col_row[virt] = row;
        let mut j0 = virt;
        min_to.iter_mut().for_each(|x| *x = f64::INFINITY);
        prev.iter_mut().for_each(|x| *x = virt);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = col_row[j0];
            let ui0 = u[i0];
            let cost_row = &cost[i0 * n..(i0 + 1) * n];
            let mut delta = f64::INFINITY;
            let mut j1 = NONE;
            for j in 0..n {
                if used[j] {
                    continue;
                }
                let reduced = cost_row[j] - ui0 - v[j];
                if reduced < min_to[j] {
                    min_to[j] = reduced;
                    prev[j] = j0;
                }
                if min_to[j] < delta {
                    delta = min_to[j];
                    j1 = j;
                }
            }
            debug_assert!(j1 != NONE, "assignment search exhausted all columns");
            for j in 0..=n {
                if used[j] {
                    u[col_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_to[j] -= delta;
                }
            }
            j0 = j1;
            if col_row[j0] == NONE {
                break;
            }
        }
        // Augment along the alternating path back to the virtual column.
        loop {
            let j1 = prev[j0];
            col_row[j0] = col_row[j1];
            j0 = j1;
            if j0 == virt {
                break;
            }
        }
    }

    let mut row_to_col = vec![NONE; n];
    for j in 0..n {
        if col_row[j] != NONE {
            row_to_col[col_row[j]] = j;
        }
    }
    debug_assert!(row_to_col.iter().all(|&c| c != NONE));
    row_to_col
}

/// Closure-cost convenience wrapper around [`solve_assignment_matrix`].
pub fn solve_assignment(n: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    let mut matrix = vec![0.0_f64; n * n];
    for i in 0..n {
        for j in 0..n {
            matrix[i * n + j] = cost(i, j);
        }
    }
    solve_assignment_matrix(n, &matrix)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force(n: usize, cost: &dyn Fn(usize, usize) -> f64) -> f64 {
        fn permutations(n: usize) -> Vec<Vec<usize>> {
            if n == 1 {
                return vec![vec![0]];
            }
            let mut out = Vec::new();
            for p in permutations(n - 1) {
                for pos in 0..n {
                    let mut q: Vec<usize> = p.iter().map(|&x| x).collect();
                    q.insert(pos, n - 1);
                    out.push(q);
                }
            }
            out
        }
        permutations(n)
            .into_iter()
            .map(|p| (0..n).map(|i| cost(i, p[i])).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn small_known_instance() {
        let c = [[8.0, 5.0, 9.0], [4.0, 2.0, 4.0], [7.0, 3.0, 8.0]];
        let assign = solve_assignment(3, |i, j| c[i][j]);
        let total: f64 = (0..3).map(|i| c[i][assign[i]]).sum();
        assert_eq!(total, 15.0);
        assert_eq!(assign, vec![0, 2, 1]);
    }

    #[test]
    fn matches_brute_force_on_random_instances() {
        let mut rng = crate::rng::Rng::seed_from_u64(99);
        for n in 2..=6 {
            for _ in 0..20 {
                let c: Vec<Vec<f64>> = (0..n)
                    .map(|_| (0..n).map(|_| rng.next_f64() * 10.0).collect())
                    .collect();
                let assign = solve_assignment(n, |i, j| c[i][j]);
                let total: f64 = (0..n).map(|i| c[i][assign[i]]).sum();
                let best = brute_force(n, &|i, j| c[i][j]);
                assert!((total - best).abs() < 1e-9, "n={n} got {total} want {best}");
            }
        }
    }

    #[test]
    fn tie_breaks_to_lowest_index() {
        // All-zero costs: identity matching is the lowest-index resolution.
        let assign = solve_assignment(4, |_, _| 0.0);
        assert_eq!(assign, vec![0, 1, 2, 3]);
    }
}
