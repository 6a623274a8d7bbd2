//! Exact finite-state engine for the Ornstein–Uhlenbeck structure on
//! Poisson configurations.
//!
//! The carrier is split into `m` cells with Poisson weights `ρ_i`; a
//! configuration is reduced to its per-cell count vector, truncated at `K`
//! atoms per cell. On the resulting `(K+1)^m` states the number operator
//!
//! `(ℒF)(k) = Σ_i ρ_i (F(k) − F(k+e_i))·[k_i < K] + k_i (F(k) − F(k−e_i))`
//!
//! is a Kronecker sum of birth–death operators, so:
//!
//! * the semigroup `e^{−tℒ}` factorizes into per-axis `(K+1)²` stochastic
//!   matrices (computed by uniformization) applied as tensor contractions;
//! * the resolvent `(I + ℒ)^{−1}` is a banded solve — `I + ℒ` is strictly
//!   diagonally dominant with margin 1, so LU without pivoting is stable,
//!   and every solve is certified by its residual;
//! * products of Charlier polynomials are exact eigenfunctions away from
//!   the truncation boundary, eigenvalue `Σ n_i`.
//!
//! Truncation leaks in only near counts of size `K`; with `K` ≳ `ρ + 10`
//! the affected states carry Poisson-tail mass far below every tolerance
//! used here, which is why checks restrict to an interior margin.

use crate::config::{Configuration, Window};
use crate::linalg::{Banded, DMat, LinalgError};
use crate::malliavin::charlier::charlier_table;
use thiserror::Error;

/// Hard cap on `(K+1)^m`.
pub const MAX_STATES: u128 = 1_000_000;
/// Cap on banded-storage entries for resolvent solves (`n · (2·bw + 1)`).
pub const MAX_BAND_ENTRIES: u128 = 20_000_000;

#[derive(Debug, Error)]
pub enum MalliavinError {
    #[error("state space ({cells} cells, truncation {k_max}) has {states} states, above {MAX_STATES}")]
    TooManyStates { cells: usize, k_max: usize, states: u128 },
    #[error("cell weight {value} at index {index} must be positive and finite")]
    BadWeight { index: usize, value: f64 },
    #[error("table has {got} entries, expected {expected}")]
    TableSize { expected: usize, got: usize },
    #[error("cell intensity {value} at index {index} must be nonnegative and finite")]
    BadIntensity { index: usize, value: f64 },
    #[error("resolvent banded storage needs {entries} entries, above {MAX_BAND_ENTRIES}")]
    BandTooWide { entries: u128 },
    #[error("resolvent residual {residual:e} exceeds {tol:e} (relative, sup norm)")]
    ResidualTooLarge { residual: f64, tol: f64 },
    #[error("truncated support needs {needed} states to reach the tail target, above the cap {max}")]
    SupportTooLarge { needed: usize, max: usize },
    #[error("orders must have one entry per cell: {got} for {cells} cells")]
    OrderShape { cells: usize, got: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteCarrierModel {
    rho: Vec<f64>,
    k_max: usize,
    strides: Vec<usize>,
    n_states: usize,
}

impl FiniteCarrierModel {
    pub fn new(weights: Vec<f64>, truncation: usize) -> Result<Self, MalliavinError> {
        if let Some((i, &w)) = weights.iter().enumerate().find(|(_, w)| !(**w > 0.0) || !w.is_finite())
        {
            return Err(MalliavinError::BadWeight { index: i, value: w });
        }
        let m = weights.len();
        if m == 0 {
            return Err(MalliavinError::BadWeight { index: 0, value: f64::NAN });
        }
        let states = (truncation as u128 + 1).pow(m as u32);
        if states > MAX_STATES {
            return Err(MalliavinError::TooManyStates { cells: m, k_max: truncation, states });
        }
        let n_states = states as usize;
        // Lexicographic layout: the first cell varies slowest.
        let mut strides = vec![1usize; m];
        for i in (0..m.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * (truncation + 1);
        }
        Ok(FiniteCarrierModel { rho: weights, k_max: truncation, strides, n_states })
    }

    pub fn n_cells(&self) -> usize {
        self.rho.len()
    }

    pub fn truncation(&self) -> usize {
        self.k_max
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn weights(&self) -> &[f64] {
        &self.rho
    }

    pub fn state(&self, idx: usize) -> Vec<u32> {
        self.strides.iter().map(|&s| ((idx / s) % (self.k_max + 1)) as u32).collect()
    }

    /// Index for a count vector; counts above the truncation clamp to `K`.
    pub fn index_of_counts(&self, counts: &[u32]) -> usize {
        debug_assert_eq!(counts.len(), self.n_cells());
        counts
            .iter()
            .zip(&self.strides)
            .map(|(&k, &s)| (k as usize).min(self.k_max) * s)
            .sum()
    }

    fn check_table(&self, f: &[f64]) -> Result<(), MalliavinError> {
        if f.len() != self.n_states {
            return Err(MalliavinError::TableSize { expected: self.n_states, got: f.len() });
        }
        Ok(())
    }

    /// Apply the number operator `ℒ` to a state table.
    pub fn apply_generator(&self, f: &[f64]) -> Result<Vec<f64>, MalliavinError> {
        self.check_table(f)?;
        let kk = self.k_max;
        let mut out = vec![0.0; self.n_states];
        for idx in 0..self.n_states {
            let mut acc = 0.0;
            for (i, &s) in self.strides.iter().enumerate() {
                let k = (idx / s) % (kk + 1);
                if k < kk {
                    acc += self.rho[i] * (f[idx] - f[idx + s]);
                }
                if k > 0 {
                    acc += k as f64 * (f[idx] - f[idx - s]);
                }
            }
            out[idx] = acc;
        }
        Ok(out)
    }

    /// Sparse COO triplets of `ℒ` (row, col, value).
    pub fn generator_triplets(&self) -> Vec<(usize, usize, f64)> {
        let kk = self.k_max;
        let mut t = Vec::new();
        for idx in 0..self.n_states {
            let mut diag = 0.0;
            for (i, &s) in self.strides.iter().enumerate() {
                let k = (idx / s) % (kk + 1);
                if k < kk {
                    diag += self.rho[i];
                    t.push((idx, idx + s, -self.rho[i]));
                }
                if k > 0 {
                    diag += k as f64;
                    t.push((idx, idx - s, -(k as f64)));
                }
            }
            t.push((idx, idx, diag));
        }
        t
    }

    /// Matrix Market (coordinate, real, general) rendering of `ℒ`.
    pub fn matrix_market(&self) -> String {
        let t = self.generator_triplets();
        let mut out = String::from("%%MatrixMarket matrix coordinate real general\n");
        out.push_str(&format!("{} {} {}\n", self.n_states, self.n_states, t.len()));
        for (i, j, v) in t {
            out.push_str(&format!("{} {} {}\n", i + 1, j + 1, v));
        }
        out
    }

    /// Product Poisson weights `Π pmf(k_i; ρ_i)` per state (unnormalized on
    /// the truncated box; the missing tail mass is a Poisson tail beyond
    /// `K`, negligible for `K ≳ ρ + 10`).
    pub fn density_table(&self) -> Vec<f64> {
        let axis: Vec<Vec<f64>> = self
            .rho
            .iter()
            .map(|&r| {
                let mut w = Vec::with_capacity(self.k_max + 1);
                let mut p = (-r).exp();
                w.push(p);
                for k in 1..=self.k_max {
                    p *= r / k as f64;
                    w.push(p);
                }
                w
            })
            .collect();
        (0..self.n_states)
            .map(|idx| {
                self.strides
                    .iter()
                    .enumerate()
                    .map(|(i, &s)| axis[i][(idx / s) % (self.k_max + 1)])
                    .product()
            })
            .collect()
    }

    /// States with every count at least `margin` below the truncation.
    pub fn interior_mask(&self, margin: usize) -> Vec<bool> {
        let cutoff = self.k_max.saturating_sub(margin) as u32;
        (0..self.n_states)
            .map(|idx| self.state(idx).iter().all(|&k| k <= cutoff))
            .collect()
    }

    /// `Π_i C_{orders[i]}(k_i; ρ_i)` per state — a chaos eigenfunction with
    /// eigenvalue `Σ orders` away from the boundary.
    pub fn charlier_product_table(&self, orders: &[usize]) -> Result<Vec<f64>, MalliavinError> {
        if orders.len() != self.n_cells() {
            return Err(MalliavinError::OrderShape { cells: self.n_cells(), got: orders.len() });
        }
        let axis: Vec<Vec<f64>> = orders
            .iter()
            .zip(&self.rho)
            .map(|(&n, &r)| charlier_table(n, r, self.k_max))
            .collect();
        Ok((0..self.n_states)
            .map(|idx| {
                self.strides
                    .iter()
                    .enumerate()
                    .map(|(i, &s)| axis[i][(idx / s) % (self.k_max + 1)])
                    .product()
            })
            .collect())
    }

    /// Apply `e^{−tℒ}` exactly (up to uniformization series truncation at
    /// relative weight 1e-18) via per-axis tensor contractions.
    pub fn exact_semigroup(&self, t: f64, f: &[f64]) -> Result<Vec<f64>, MalliavinError> {
        self.check_table(f)?;
        assert!(t >= 0.0 && t.is_finite(), "time must be nonnegative");
        let mut cur = f.to_vec();
        if t == 0.0 {
            return Ok(cur);
        }
        for (i, &s) in self.strides.iter().enumerate() {
            let p = axis_semigroup(self.rho[i], self.k_max, t);
            cur = apply_axis(&cur, &p, self.k_max + 1, s);
        }
        Ok(cur)
    }

    /// Solve `(I + ℒ) g = f` by banded LU and certify the residual to
    /// `1e-10` relative (sup norm).
    pub fn exact_resolvent(&self, f: &[f64]) -> Result<Vec<f64>, MalliavinError> {
        self.check_table(f)?;
        let bw = self.strides[0];
        let entries = self.n_states as u128 * (2 * bw as u128 + 1);
        if entries > MAX_BAND_ENTRIES {
            return Err(MalliavinError::BandTooWide { entries });
        }
        let kk = self.k_max;
        let mut mat = Banded::zeros(self.n_states, bw);
        for idx in 0..self.n_states {
            let mut diag = 1.0;
            for (i, &s) in self.strides.iter().enumerate() {
                let k = (idx / s) % (kk + 1);
                if k < kk {
                    diag += self.rho[i];
                    mat.add(idx, idx + s, -self.rho[i]);
                }
                if k > 0 {
                    diag += k as f64;
                    mat.add(idx, idx - s, -(k as f64));
                }
            }
            mat.add(idx, idx, diag);
        }
        mat.factor()?;
        let g = mat.solve(f);
        let lg = self.apply_generator(&g)?;
        let sup_f = f.iter().fold(0.0f64, |a, &x| a.max(x.abs())).max(f64::MIN_POSITIVE);
        let mut resid = 0.0f64;
        for idx in 0..self.n_states {
            resid = resid.max((g[idx] + lg[idx] - f[idx]).abs());
        }
        let rel = resid / sup_f;
        if rel > 1e-10 {
            return Err(MalliavinError::ResidualTooLarge { residual: rel, tol: 1e-10 });
        }
        Ok(g)
    }

    /// Per-axis forward difference `F(k + e_axis) − F(k)` (zero at the
    /// truncation boundary, where the weight is negligible anyway).
    pub fn discrete_gradient_table(&self, f: &[f64], axis: usize) -> Result<Vec<f64>, MalliavinError> {
        self.check_table(f)?;
        assert!(axis < self.n_cells());
        let s = self.strides[axis];
        let kk = self.k_max;
        Ok((0..self.n_states)
            .map(|idx| {
                if (idx / s) % (kk + 1) < kk {
                    f[idx + s] - f[idx]
                } else {
                    0.0
                }
            })
            .collect())
    }

    /// Girsanov density table of the tilt with per-cell intensities `h`
    /// (reference 1): `L(k) = Π h_i^{k_i} e^{−ρ_i (h_i − 1)}`. Satisfies
    /// `E[L] = 1` and `E[L²] = exp(Σ ρ_i (h_i − 1)²)` exactly (up to
    /// truncation tails).
    pub fn girsanov_table(&self, h: &[f64]) -> Result<Vec<f64>, MalliavinError> {
        if h.len() != self.n_cells() {
            return Err(MalliavinError::OrderShape { cells: self.n_cells(), got: h.len() });
        }
        if let Some((i, &v)) = h.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
            return Err(MalliavinError::BadIntensity { index: i, value: v });
        }
        let axis: Vec<Vec<f64>> = h
            .iter()
            .zip(&self.rho)
            .map(|(&hv, &r)| {
                let base = (-r * (hv - 1.0)).exp();
                (0..=self.k_max).map(|k| base * hv.powi(k as i32)).collect()
            })
            .collect();
        Ok((0..self.n_states)
            .map(|idx| {
                self.strides
                    .iter()
                    .enumerate()
                    .map(|(i, &s)| axis[i][(idx / s) % (self.k_max + 1)])
                    .product()
            })
            .collect())
    }

    /// Per-cell atom counts of a configuration on a one-dimensional window
    /// split into `m` equal cells (not clamped at the truncation).
    pub fn counts_from_configuration(&self, cfg: &Configuration, window: &Window) -> Vec<u32> {
        assert_eq!(window.dim(), 1, "engine carriers are one-dimensional");
        let (lo, hi) = window.bounds()[0];
        let m = self.n_cells();
        let mut counts = vec![0u32; m];
        for p in cfg.points() {
            let t = p.coords()[0];
            let cell = (((t - lo) / (hi - lo) * m as f64).floor() as isize)
                .clamp(0, m as isize - 1) as usize;
            counts[cell] += 1;
        }
        counts
    }

    /// View a state table as a functional of configurations on `window`.
    pub fn table_functional<'a>(
        &'a self,
        table: &'a [f64],
        window: &'a Window,
    ) -> impl Fn(&Configuration) -> f64 + 'a {
        move |cfg| table[self.index_of_counts(&self.counts_from_configuration(cfg, window))]
    }

    /// The reference (or `h`-tilted) intensity on `window` whose per-cell
    /// integrals are `ρ_i` (resp. `ρ_i h_i`): piecewise constant at
    /// `m ρ_i / |window|` per cell.
    pub fn window_intensity(
        &self,
        window: &Window,
        h: Option<&[f64]>,
    ) -> Result<crate::simulate::IntensityFunction, crate::simulate::SimError> {
        assert_eq!(window.dim(), 1, "engine carriers are one-dimensional");
        let (lo, hi) = window.bounds()[0];
        let m = self.n_cells();
        let knots: Vec<f64> = (0..=m).map(|i| lo + (hi - lo) * i as f64 / m as f64).collect();
        let values: Vec<f64> = self
            .rho
            .iter()
            .enumerate()
            .map(|(i, &r)| r * m as f64 / (hi - lo) * h.map_or(1.0, |h| h[i]))
            .collect();
        crate::simulate::IntensityFunction::piecewise(knots, values)
    }

    /// The most probable states covering all but `tail_mass` of the law,
    /// renormalized: `(count vectors, probabilities)`, sorted by
    /// probability descending.
    pub fn truncated_support(
        &self,
        tail_mass: f64,
        max_states: usize,
    ) -> Result<(Vec<Vec<u32>>, Vec<f64>), MalliavinError> {
        let dens = self.density_table();
        let mut order: Vec<usize> = (0..self.n_states).collect();
        order.sort_by(|&a, &b| dens[b].total_cmp(&dens[a]).then(a.cmp(&b)));
        let mut kept = Vec::new();
        let mut probs = Vec::new();
        let mut total = 0.0;
        for &idx in &order {
            if total >= 1.0 - tail_mass {
                break;
            }
            if kept.len() == max_states {
                return Err(MalliavinError::SupportTooLarge {
                    needed: max_states + 1,
                    max: max_states,
                });
            }
            kept.push(self.state(idx));
            probs.push(dens[idx]);
            total += dens[idx];
        }
        probs.iter_mut().for_each(|p| *p /= total);
        Ok((kept, probs))
    }
}

/// `exp(−t · L_axis)` for one birth–death axis (up-rate `ρ`, down-rate `k`),
/// by uniformization with chunking so each chunk has `λ Δt ≤ 30`.
fn axis_semigroup(rho: f64, k_max: usize, t: f64) -> DMat {
    let n = k_max + 1;
    let lambda = rho + k_max as f64;
    if lambda == 0.0 || t == 0.0 {
        return DMat::identity(n);
    }
    let n_chunks = ((lambda * t / 30.0).ceil() as usize).max(1);
    let dt = t / n_chunks as f64;

    // Uniformized one-step matrix U = I + A/λ (A is the Markov generator).
    let mut u = DMat::zeros(n, n);
    for k in 0..n {
        let up = if k < k_max { rho } else { 0.0 };
        let down = k as f64;
        u.set(k, k, 1.0 - (up + down) / lambda);
        if k < k_max {
            u.set(k, k + 1, up / lambda);
        }
        if k > 0 {
            u.set(k, k - 1, down / lambda);
        }
    }

    // One chunk: e^{−a} Σ_j a^j/j! · U^j with a = λΔt, truncated once the
    // Poisson weights have covered all but 1e-18 of their mass.
    let a = lambda * dt;
    let mut term = DMat::identity(n);
    let mut chunk = DMat::zeros(n, n);
    let mut weight = (-a).exp();
    for (c, t_) in chunk.data.iter_mut().zip(&term.data) {
        *c += weight * t_;
    }
    let mut tail = 1.0 - weight;
    let mut j = 0usize;
    while tail > 1e-18 && j < 10_000 {
        j += 1;
        term = term.matmul(&u);
        weight *= a / j as f64;
        for (c, t_) in chunk.data.iter_mut().zip(&term.data) {
            *c += weight * t_;
        }
        tail -= weight;
    }

    let mut out = chunk.clone();
    for _ in 1..n_chunks {
        out = out.matmul(&chunk);
    }
    out
}

/// Contract `p` (axis transition matrix) into `f` along one tensor axis.
fn apply_axis(f: &[f64], p: &DMat, axis_len: usize, stride: usize) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    let block = axis_len * stride;
    for hi in 0..n / block {
        for lo in 0..stride {
            let base = hi * block + lo;
            for k in 0..axis_len {
                let mut acc = 0.0;
                for kp in 0..axis_len {
                    acc += p.get(k, kp) * f[base + kp * stride];
                }
                out[base + k * stride] = acc;
            }
        }
    }
    out
}

/// One row of a chaos eigenvalue check.
#[derive(Debug, Clone)]
pub struct EigencheckRow {
    pub orders: Vec<usize>,
    pub eigenvalue: f64,
    /// Sup of `|C|` over the interior (the residual's normalizer).
    pub sup_scale: f64,
    /// `sup_interior |ℒC − λC| / sup_interior |C|`.
    pub residual: f64,
}

impl FiniteCarrierModel {
    /// Check `ℒ (Π C_{n_i}) = (Σ n_i) Π C_{n_i}` for every multi-order with
    /// total order up to `max_total_order`, on the interior (counts at
    /// least `margin` below the truncation). Residuals are relative to the
    /// sup of the eigenfunction over the same interior: raw Charlier values
    /// reach ~1e8 at high order, where absolute comparisons would be noise.
    pub fn chaos_eigencheck(
        &self,
        max_total_order: usize,
        margin: usize,
    ) -> Result<Vec<EigencheckRow>, MalliavinError> {
        let interior = self.interior_mask(margin);
        let mut rows = Vec::new();
        let mut orders = vec![0usize; self.n_cells()];
        self.eigencheck_rec(0, max_total_order, &mut orders, &interior, &mut rows)?;
        Ok(rows)
    }

    fn eigencheck_rec(
        &self,
        cell: usize,
        budget: usize,
        orders: &mut Vec<usize>,
        interior: &[bool],
        rows: &mut Vec<EigencheckRow>,
    ) -> Result<(), MalliavinError> {
        if cell == self.n_cells() {
            let table = self.charlier_product_table(orders)?;
            let lt = self.apply_generator(&table)?;
            let lambda = orders.iter().sum::<usize>() as f64;
            let mut sup_scale = 0.0f64;
            let mut sup_resid = 0.0f64;
            for idx in 0..self.n_states {
                if interior[idx] {
                    sup_scale = sup_scale.max(table[idx].abs());
                    sup_resid = sup_resid.max((lt[idx] - lambda * table[idx]).abs());
                }
            }
            let scale = sup_scale.max(f64::MIN_POSITIVE);
            rows.push(EigencheckRow {
                orders: orders.clone(),
                eigenvalue: lambda,
                sup_scale,
                residual: sup_resid / scale,
            });
            return Ok(());
        }
        for n in 0..=budget {
            orders[cell] = n;
            self.eigencheck_rec(cell + 1, budget - n, orders, interior, rows)?;
        }
        orders[cell] = 0;
        Ok(())
    }
}
