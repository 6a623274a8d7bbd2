//! Minimum-cost assignment (Kuhn–Munkres with potentials, O(n²m)).
//!
//! Solves `min Σ_i c[i, σ(i)]` over injections `σ: rows → cols` for
//! `n_rows ≤ n_cols`. The algorithm only ever adds and subtracts cost
//! entries, so on inputs whose values (and partial sums) are exactly
//! representable — e.g. small dyadic rationals — the optimum is computed
//! with no rounding at all.

use super::TransportError;

/// Returns `(row_to_col, total_cost)`.
pub fn min_cost_assignment(
    n_rows: usize,
    n_cols: usize,
    cost: &[f64],
) -> Result<(Vec<usize>, f64), TransportError> {
    if cost.len() != n_rows * n_cols {
        return Err(TransportError::Shape { rows: n_rows, cols: n_cols, len: cost.len() });
    }
    if n_rows > n_cols {
        return Err(TransportError::TooManyRows { rows: n_rows, cols: n_cols });
    }
    if let Some(k) = cost.iter().position(|c| !c.is_finite()) {
        return Err(TransportError::NonFiniteCost { row: k / n_cols, col: k % n_cols });
    }
    if n_rows == 0 {
        return Ok((Vec::new(), 0.0));
    }

    let (n, m) = (n_rows, n_cols);
    let at = |i: usize, j: usize| cost[(i - 1) * m + (j - 1)]; // 1-indexed view

    // Shortest augmenting paths with dual potentials u (rows), v (cols).
    // Column 0 is a virtual start; p[j] is the row matched to column j.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = at(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        // Augment along the alternating path back to the virtual column.
        while j0 != 0 {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        }
    }

    let mut row_to_col = vec![usize::MAX; n];
    for j in 1..=m {
        if p[j] != 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    debug_assert!(row_to_col.iter().all(|&j| j != usize::MAX));
    let total = row_to_col.iter().enumerate().map(|(i, &j)| cost[i * m + j]).sum();
    Ok((row_to_col, total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn brute(n: usize, m: usize, cost: &[f64]) -> f64 {
        fn rec(k: usize, n: usize, m: usize, cost: &[f64], taken: &mut Vec<bool>) -> f64 {
            if k == n {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for j in 0..m {
                if !taken[j] {
                    taken[j] = true;
                    let c = cost[k * m + j] + rec(k + 1, n, m, cost, taken);
                    if c < best {
                        best = c;
                    }
                    taken[j] = false;
                }
            }
            best
        }
        rec(0, n, m, cost, &mut vec![false; m])
    }

    #[test]
    fn hand_case() {
        // Optimal: (0,1)+(1,0) = 1 + 2 = 3 vs diagonal 4 + 5 = 9.
        let cost = [4.0, 1.0, 2.0, 5.0];
        let (perm, total) = min_cost_assignment(2, 2, &cost).unwrap();
        assert_eq!(perm, vec![1, 0]);
        assert_eq!(total, 3.0);
    }

    #[test]
    fn matches_brute_force_on_random_dyadics() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..300 {
            let n = 1 + trial % 6;
            let m = n + trial % 3; // rectangular every third trial
            let cost: Vec<f64> =
                (0..n * m).map(|_| rng.random_range(0..256) as f64 / 8.0).collect();
            let (perm, total) = min_cost_assignment(n, m, &cost).unwrap();
            // Injection check.
            let mut seen = vec![false; m];
            for &j in &perm {
                assert!(!seen[j]);
                seen[j] = true;
            }
            // Dyadic inputs: optimum must match brute force bit for bit.
            assert_eq!(total, brute(n, m, &cost), "trial {trial}");
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            min_cost_assignment(2, 2, &[1.0, 2.0, 3.0]),
            Err(TransportError::Shape { .. })
        ));
        assert!(matches!(
            min_cost_assignment(3, 2, &[1.0; 6]),
            Err(TransportError::TooManyRows { .. })
        ));
        assert!(matches!(
            min_cost_assignment(2, 2, &[1.0, f64::INFINITY, 3.0, 4.0]),
            Err(TransportError::NonFiniteCost { row: 0, col: 1 })
        ));
    }

    #[test]
    fn zero_rows_is_empty() {
        let (perm, total) = min_cost_assignment(0, 0, &[]).unwrap();
        assert!(perm.is_empty());
        assert_eq!(total, 0.0);
    }
}
