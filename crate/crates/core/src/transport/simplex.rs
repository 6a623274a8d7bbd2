//! Network simplex for the balanced transportation problem.
//!
//! Supplies and demands are integers (callers scale probability masses onto
//! an integer grid first), so flow conservation is exact; only the cost side
//! carries floating point. Potentials are built from cost entries by
//! addition and subtraction alone, which makes the solver exact on dyadic
//! cost matrices, and every solve is checked against its own dual
//! certificate before being returned.

use super::TransportError;

const PRICE_BLOCK: usize = 4096;

#[derive(Debug, Clone)]
pub struct FlowPlan {
    /// Positive flows only, as `(row, col, amount)` on the integer grid.
    pub flows: Vec<(usize, usize, i64)>,
    /// `Σ amount · cost` on the integer grid (divide by the grid scale).
    pub objective: f64,
    /// Worst dual-feasibility / complementary-slackness violation.
    pub max_dual_violation: f64,
    /// Relative primal–dual objective gap.
    pub duality_gap: f64,
    pub pivots: usize,
}

pub fn transportation_simplex(
    supply: &[i64],
    demand: &[i64],
    cost: &[f64],
) -> Result<FlowPlan, TransportError> {
    let (n, m) = (supply.len(), demand.len());
    if n == 0 || m == 0 || cost.len() != n * m {
        return Err(TransportError::Shape { rows: n, cols: m, len: cost.len() });
    }
    if let Some(k) = cost.iter().position(|c| !c.is_finite()) {
        return Err(TransportError::NonFiniteCost { row: k / m, col: k % m });
    }
    if let Some(i) = supply.iter().position(|&s| s < 0) {
        return Err(TransportError::NegativeMass { side: "supply", index: i, value: supply[i] });
    }
    if let Some(j) = demand.iter().position(|&d| d < 0) {
        return Err(TransportError::NegativeMass { side: "demand", index: j, value: demand[j] });
    }
    let (ts, td) = (supply.iter().sum::<i64>(), demand.iter().sum::<i64>());
    if ts != td {
        return Err(TransportError::Unbalanced { supply: ts, demand: td });
    }

    // Northwest-corner initial basis: a staircase of n + m - 1 cells forming
    // a spanning tree of the bipartite graph (zero flows where degenerate).
    let mut basis: Vec<(usize, usize)> = Vec::with_capacity(n + m - 1);
    let mut flow: Vec<i64> = Vec::with_capacity(n + m - 1);
    {
        let (mut ra, mut rb) = (supply.to_vec(), demand.to_vec());
        let (mut i, mut j) = (0, 0);
        loop {
            let t = ra[i].min(rb[j]);
            basis.push((i, j));
            flow.push(t);
            ra[i] -= t;
            rb[j] -= t;
            if ra[i] == 0 && i + 1 < n {
                i += 1;
            } else if rb[j] == 0 && j + 1 < m {
                j += 1;
            } else if i + 1 < n {
                i += 1;
            } else if j + 1 < m {
                j += 1;
            } else {
                break;
            }
        }
        debug_assert_eq!(basis.len(), n + m - 1);
    }

    let cmax = cost.iter().fold(0.0f64, |a, &c| a.max(c.abs()));
    let eps = 1e-12 * cmax.max(1.0);
    let pivot_cap = 2_000_000usize;
    let mut pivots = 0usize;
    let mut cursor = 0usize;
    let mut pot = vec![0.0f64; n + m];

    loop {
        // Potentials u_i = pot[i], v_j = pot[n + j] with u_i + v_j = c_ij on
        // basic cells, rooted at node 0; parents give tree paths for cycles.
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n + m];
        for (b, &(i, j)) in basis.iter().enumerate() {
            adj[i].push((n + j, b));
            adj[n + j].push((i, b));
        }
        let mut parent: Vec<(usize, usize)> = vec![(usize::MAX, usize::MAX); n + m];
        let mut depth = vec![0usize; n + m];
        let mut seen = vec![false; n + m];
        pot[0] = 0.0;
        seen[0] = true;
        let mut stack = vec![0usize];
        while let Some(v) = stack.pop() {
            for &(w, b) in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    let (i, j) = basis[b];
                    pot[w] = cost[i * m + j] - pot[v];
                    parent[w] = (v, b);
                    depth[w] = depth[v] + 1;
                    stack.push(w);
                }
            }
        }
        debug_assert!(seen.iter().all(|&s| s), "basis must span");

        // Block pricing: resume scanning where the last pivot stopped, take
        // the most negative reduced cost in the first block containing one.
        let total_arcs = n * m;
        let mut entering: Option<(usize, f64)> = None;
        let mut scanned = 0usize;
        while scanned < total_arcs {
            let mut best: Option<(usize, f64)> = None;
            let block_end = scanned + PRICE_BLOCK.min(total_arcs - scanned);
            while scanned < block_end {
                let a = cursor;
                cursor += 1;
                if cursor == total_arcs {
                    cursor = 0;
                }
                scanned += 1;
                let r = cost[a] - pot[a / m] - pot[n + a % m];
                if r < -eps && best.is_none_or(|(_, br)| r < br) {
                    best = Some((a, r));
                }
            }
            if best.is_some() {
                entering = best;
                break;
            }
        }
        let Some((a_in, _)) = entering else {
            break; // dual feasible everywhere: optimal
        };

        // The entering cell closes a unique cycle with the tree path between
        // its endpoints. Flow alternates -δ, +δ, ... along that path.
        let (ei, ej) = (a_in / m, a_in % m);
        let (mut x, mut y) = (ei, n + ej);
        let mut arm_x: Vec<usize> = Vec::new();
        let mut arm_y: Vec<usize> = Vec::new();
        while depth[x] > depth[y] {
            arm_x.push(parent[x].1);
            x = parent[x].0;
        }
        while depth[y] > depth[x] {
            arm_y.push(parent[y].1);
            y = parent[y].0;
        }
        while x != y {
            arm_x.push(parent[x].1);
            x = parent[x].0;
            arm_y.push(parent[y].1);
            y = parent[y].0;
        }
        let path: Vec<usize> = arm_x.into_iter().chain(arm_y.into_iter().rev()).collect();

        let mut delta = i64::MAX;
        let mut leave = usize::MAX;
        for (pos, &b) in path.iter().enumerate() {
            if pos % 2 == 0 && (flow[b] < delta || (flow[b] == delta && b < leave)) {
                delta = flow[b];
                leave = b;
            }
        }
        debug_assert!(leave != usize::MAX);
        for (pos, &b) in path.iter().enumerate() {
            if pos % 2 == 0 {
                flow[b] -= delta;
            } else {
                flow[b] += delta;
            }
        }
        basis[leave] = (ei, ej);
        flow[leave] = delta;

        pivots += 1;
        if pivots > pivot_cap {
            return Err(TransportError::PivotLimit { pivots });
        }
    }

    // Certificate: dual feasibility, complementary slackness, and a closed
    // primal-dual gap, against the final potentials.
    let mut max_viol = 0.0f64;
    for a in 0..n * m {
        let r = cost[a] - pot[a / m] - pot[n + a % m];
        max_viol = max_viol.max(-r);
    }
    let mut objective = 0.0f64;
    let mut row_out = vec![0i64; n];
    let mut col_in = vec![0i64; m];
    let mut flows = Vec::new();
    for (b, &(i, j)) in basis.iter().enumerate() {
        let f = flow[b];
        debug_assert!(f >= 0);
        row_out[i] += f;
        col_in[j] += f;
        if f > 0 {
            objective += f as f64 * cost[i * m + j];
            max_viol = max_viol.max((cost[i * m + j] - pot[i] - pot[n + j]).abs());
            flows.push((i, j, f));
        }
    }
    debug_assert_eq!(row_out, supply);
    debug_assert_eq!(col_in, demand);
    let dual: f64 = supply.iter().enumerate().map(|(i, &s)| s as f64 * pot[i]).sum::<f64>()
        + demand.iter().enumerate().map(|(j, &d)| d as f64 * pot[n + j]).sum::<f64>();
    let scale = ts as f64 * cmax.max(1.0);
    let duality_gap = (objective - dual).abs() / scale.max(1.0);
    let tol = 1e-9;
    if max_viol > tol * cmax.max(1.0) || duality_gap > tol {
        return Err(TransportError::CertificateFailure { max_viol, duality_gap });
    }
    Ok(FlowPlan { flows, objective, max_dual_violation: max_viol, duality_gap, pivots })
}
