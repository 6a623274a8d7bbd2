//! Optimal transport between laws of configurations.
//!
//! Two routes to the Rubinstein (Kantorovich–Wasserstein-1) distance:
//!
//! * [`exact_kantorovich`] — both laws given explicitly on finite supports.
//!   Masses are rounded onto an integer grid of `10^9` (largest-remainder,
//!   so totals balance exactly) and the transportation LP is solved by
//!   network simplex with a dual certificate. Grid rounding perturbs the
//!   value by at most `n_states / 10^9 · max_cost`.
//! * [`empirical_rubinstein`] — both laws given by i.i.d. samples. Equal
//!   sample counts are matched optimally (assignment problem); the larger
//!   sample is downsampled without replacement when counts differ. A
//!   bootstrap over resampled indices (reusing the cost matrix) gives a
//!   standard error.

pub mod assignment;
pub mod simplex;

use crate::config::{Configuration, GroundMetric, Point};
use crate::rng::Stream;
use rand::Rng;
use thiserror::Error;

pub use assignment::min_cost_assignment;
pub use simplex::{transportation_simplex, FlowPlan};

/// Mass grid for exact LP solves: probabilities become integer multiples of
/// `1e-9`.
pub const MASS_GRID: i64 = 1_000_000_000;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("cost matrix shaped {rows}x{cols} has {len} entries")]
    Shape { rows: usize, cols: usize, len: usize },
    #[error("non-finite ground cost between states {row} and {col} (d2 is infinite across unequal cardinalities)")]
    NonFiniteCost { row: usize, col: usize },
    #[error("assignment needs rows <= cols, got {rows} > {cols}")]
    TooManyRows { rows: usize, cols: usize },
    #[error("{side} mass {value} at index {index} is negative")]
    NegativeMass { side: &'static str, index: usize, value: i64 },
    #[error("total supply {supply} != total demand {demand} on the integer grid")]
    Unbalanced { supply: i64, demand: i64 },
    #[error("simplex exceeded {pivots} pivots without converging")]
    PivotLimit { pivots: usize },
    #[error("optimality certificate failed: dual violation {max_viol:e}, duality gap {duality_gap:e}")]
    CertificateFailure { max_viol: f64, duality_gap: f64 },
    #[error("law has {states} states but {probs} probabilities")]
    LawShape { states: usize, probs: usize },
    #[error("law probabilities sum to {sum}, expected 1 within 1e-12")]
    MassNotOne { sum: f64 },
    #[error("negative probability {value} at state {index}")]
    NegativeProbability { index: usize, value: f64 },
    #[error("law states {first} and {second} are identical")]
    DuplicateState { first: usize, second: usize },
    #[error("tilt weights must be nonnegative with positive total, got total {total}")]
    BadTilt { total: f64 },
    #[error("empirical estimate needs at least one sample on each side")]
    Empty,
}

/// A probability law on finitely many configurations.
#[derive(Debug, Clone)]
pub struct DiscreteLaw {
    states: Vec<Configuration>,
    probs: Vec<f64>,
}

impl DiscreteLaw {
    /// States must be distinct, probabilities nonnegative summing to 1
    /// within `1e-12`.
    pub fn new(states: Vec<Configuration>, probs: Vec<f64>) -> Result<Self, TransportError> {
        if states.len() != probs.len() {
            return Err(TransportError::LawShape { states: states.len(), probs: probs.len() });
        }
        if let Some((i, &p)) = probs.iter().enumerate().find(|(_, p)| !(**p >= 0.0)) {
            return Err(TransportError::NegativeProbability { index: i, value: p });
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(TransportError::MassNotOne { sum });
        }
        let mut order: Vec<usize> = (0..states.len()).collect();
        order.sort_by(|&a, &b| states[a].cmp(&states[b]));
        for w in order.windows(2) {
            if states[w[0]] == states[w[1]] {
                let (a, b) = (w[0].min(w[1]), w[0].max(w[1]));
                return Err(TransportError::DuplicateState { first: a, second: b });
            }
        }
        Ok(DiscreteLaw { states, probs })
    }

    pub fn states(&self) -> &[Configuration] {
        &self.states
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// The law reweighted by a nonnegative density: `p_i ↦ p_i w_i / Σ p w`.
    /// This is how a Girsanov-tilted law `L·μ` is materialized from `μ` and
    /// the density values on its support.
    pub fn tilted_by(&self, weights: &[f64]) -> Result<Self, TransportError> {
        if weights.len() != self.len() {
            return Err(TransportError::LawShape { states: self.len(), probs: weights.len() });
        }
        if let Some((i, &w)) = weights.iter().enumerate().find(|(_, w)| !(**w >= 0.0)) {
            return Err(TransportError::NegativeProbability { index: i, value: w });
        }
        let probs: Vec<f64> = self.probs.iter().zip(weights).map(|(p, w)| p * w).collect();
        let total: f64 = probs.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(TransportError::BadTilt { total });
        }
        DiscreteLaw::new(self.states.clone(), probs.iter().map(|p| p / total).collect())
    }

    /// `E[f]` under the law.
    pub fn expectation(&self, mut f: impl FnMut(&Configuration) -> f64) -> f64 {
        self.states.iter().zip(&self.probs).map(|(s, p)| p * f(s)).sum()
    }
}

/// Round probabilities onto an integer grid totalling exactly `total`
/// (largest-remainder apportionment; input is normalized by its own sum
/// first).
pub fn scale_to_grid(probs: &[f64], total: i64) -> Vec<i64> {
    let n = probs.len();
    let sum: f64 = probs.iter().sum();
    assert!(sum > 0.0 && sum.is_finite(), "mass must be positive");
    let mut out = Vec::with_capacity(n);
    let mut fracs: Vec<(f64, usize)> = Vec::with_capacity(n);
    for (i, &p) in probs.iter().enumerate() {
        let raw = p / sum * total as f64;
        let fl = raw.floor();
        out.push(fl as i64);
        fracs.push((raw - fl, i));
    }
    let rem = total - out.iter().sum::<i64>();
    assert!(rem >= 0 && rem <= n as i64, "remainder {rem} out of range");
    fracs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in fracs.iter().take(rem as usize) {
        out[i] += 1;
    }
    out
}

/// Row-major ground-cost matrix between two state lists.
pub fn cost_matrix(rows: &[Configuration], cols: &[Configuration], metric: GroundMetric) -> Vec<f64> {
    rows.iter().flat_map(|a| cols.iter().map(move |b| metric.distance(a, b))).collect()
}

/// Dense CSV rendering of a row-major cost matrix (floats print in
/// round-trip form).
pub fn cost_matrix_csv(n_rows: usize, n_cols: usize, cost: &[f64]) -> String {
    assert_eq!(cost.len(), n_rows * n_cols);
    let mut out = String::new();
    for i in 0..n_rows {
        for j in 0..n_cols {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format!("{}", cost[i * n_cols + j]));
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone)]
pub struct KantorovichSolution {
    pub distance: f64,
    /// Optimal plan as `(row_state, col_state, mass)`.
    pub plan: Vec<(usize, usize, f64)>,
    pub duality_gap: f64,
    pub pivots: usize,
}

/// The Rubinstein distance between two explicit finite laws, by LP.
pub fn exact_kantorovich(
    mu: &DiscreteLaw,
    nu: &DiscreteLaw,
    metric: GroundMetric,
) -> Result<KantorovichSolution, TransportError> {
    let cost = cost_matrix(mu.states(), nu.states(), metric);
    if let Some(k) = cost.iter().position(|c| !c.is_finite()) {
        return Err(TransportError::NonFiniteCost { row: k / nu.len(), col: k % nu.len() });
    }
    let supply = scale_to_grid(mu.probs(), MASS_GRID);
    let demand = scale_to_grid(nu.probs(), MASS_GRID);
    let plan = transportation_simplex(&supply, &demand, &cost)?;
    let inv = 1.0 / MASS_GRID as f64;
    Ok(KantorovichSolution {
        distance: plan.objective * inv,
        plan: plan.flows.iter().map(|&(i, j, f)| (i, j, f as f64 * inv)).collect(),
        duality_gap: plan.duality_gap,
        pivots: plan.pivots,
    })
}

#[derive(Debug, Clone)]
pub struct EmpiricalEstimate {
    pub estimate: f64,
    pub bootstrap_se: f64,
    /// Matched pairs actually used (min of the two sample sizes).
    pub n_pairs: usize,
    pub n_bootstrap: usize,
}

/// Empirical Rubinstein distance between two i.i.d. samples of
/// configurations: optimal matching of the samples, plus a bootstrap
/// standard error (at least 50 resamples).
pub fn empirical_rubinstein(
    xs: &[Configuration],
    ys: &[Configuration],
    metric: GroundMetric,
    n_bootstrap: usize,
    rng: &mut Stream,
) -> Result<EmpiricalEstimate, TransportError> {
    if xs.is_empty() || ys.is_empty() {
        return Err(TransportError::Empty);
    }
    let n = xs.len().min(ys.len());
    let xi = sample_without_replacement(xs.len(), n, rng);
    let yi = sample_without_replacement(ys.len(), n, rng);
    let cost: Vec<f64> = xi
        .iter()
        .flat_map(|&i| yi.iter().map(move |&j| metric.distance(&xs[i], &ys[j])))
        .collect();
    let (_, total) = min_cost_assignment(n, n, &cost)?;
    let estimate = total / n as f64;

    let n_bootstrap = n_bootstrap.max(50);
    let mut boots = Vec::with_capacity(n_bootstrap);
    let mut bcost = vec![0.0f64; n * n];
    for _ in 0..n_bootstrap {
        let bi: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let bj: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        for (k, &ik) in bi.iter().enumerate() {
            for (l, &jl) in bj.iter().enumerate() {
                bcost[k * n + l] = cost[ik * n + jl];
            }
        }
        let (_, btot) = min_cost_assignment(n, n, &bcost)?;
        boots.push(btot / n as f64);
    }
    let mean = boots.iter().sum::<f64>() / boots.len() as f64;
    let var = boots.iter().map(|b| (b - mean) * (b - mean)).sum::<f64>() / (boots.len() - 1) as f64;
    Ok(EmpiricalEstimate {
        estimate,
        bootstrap_se: var.sqrt(),
        n_pairs: n,
        n_bootstrap,
    })
}

fn sample_without_replacement(len: usize, n: usize, rng: &mut Stream) -> Vec<usize> {
    debug_assert!(n <= len);
    if n == len {
        return (0..len).collect();
    }
    let mut idx: Vec<usize> = (0..len).collect();
    for k in 0..n {
        let j = rng.random_range(k..len);
        idx.swap(k, j);
    }
    idx.truncate(n);
    idx
}

/// Embed an occupation-count vector as a configuration: cell `i` of `m`
/// equal cells on `[0, 1]` contributes `counts[i]` atoms at its center.
pub fn configuration_from_counts(counts: &[u32]) -> Configuration {
    let m = counts.len();
    let mut pts = Vec::new();
    for (i, &k) in counts.iter().enumerate() {
        let x = (i as f64 + 0.5) / m as f64;
        for _ in 0..k {
            pts.push(Point::scalar(x).expect("cell centers are finite"));
        }
    }
    Configuration::new(pts).expect("same dimension by construction")
}
