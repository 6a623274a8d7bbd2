//! Dense and banded linear algebra, sized for this crate's needs: CTMC
//! stationary solves (tiny dense systems), single-axis transition matrices
//! (dense, ≤ a few hundred square), and resolvent solves on product state
//! spaces (banded, up to ~10^4 unknowns with bandwidth `(K+1)^(m-1)`).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is singular to working precision (pivot {pivot:.3e} at column {col})")]
    Singular { col: usize, pivot: f64 },
    #[error("dimension mismatch: {0}")]
    Shape(String),
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DMat {
    pub n_rows: usize,
    pub n_cols: usize,
    pub data: Vec<f64>,
}

impl DMat {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        DMat { n_rows, n_cols, data: vec![0.0; n_rows * n_cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = DMat::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == n_cols));
        DMat { n_rows, n_cols, data: rows.concat() }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n_cols + j] = v;
    }

    pub fn matmul(&self, other: &DMat) -> DMat {
        assert_eq!(self.n_cols, other.n_rows);
        let mut out = DMat::zeros(self.n_rows, other.n_cols);
        for i in 0..self.n_rows {
            for k in 0..self.n_cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                let row_k = &other.data[k * other.n_cols..(k + 1) * other.n_cols];
                let row_o = &mut out.data[i * other.n_cols..(i + 1) * other.n_cols];
                for (o, b) in row_o.iter_mut().zip(row_k) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.n_cols, x.len());
        (0..self.n_rows)
            .map(|i| {
                self.data[i * self.n_cols..(i + 1) * self.n_cols]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }
}

/// Solve `A x = b` by LU with partial pivoting. `A` is consumed as workspace.
pub fn solve_dense(mut a: DMat, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let n = a.n_rows;
    if a.n_cols != n || b.len() != n {
        return Err(LinalgError::Shape(format!(
            "solve_dense: {}x{} with rhs {}",
            a.n_rows,
            a.n_cols,
            b.len()
        )));
    }
    let mut x = b.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let (pivot_row, pivot) = (k..n)
            .map(|i| (i, a.get(i, k).abs()))
            .max_by(|u, v| u.1.total_cmp(&v.1))
            .unwrap();
        if pivot <= f64::MIN_POSITIVE * 4.0 {
            return Err(LinalgError::Singular { col: k, pivot });
        }
        if pivot_row != k {
            for j in 0..n {
                let t = a.get(k, j);
                a.set(k, j, a.get(pivot_row, j));
                a.set(pivot_row, j, t);
            }
            x.swap(k, pivot_row);
            perm.swap(k, pivot_row);
        }
        let akk = a.get(k, k);
        for i in k + 1..n {
            let l = a.get(i, k) / akk;
            if l == 0.0 {
                continue;
            }
            a.set(i, k, l);
            for j in k + 1..n {
                let v = a.get(i, j) - l * a.get(k, j);
                a.set(i, j, v);
            }
            x[i] -= l * x[k];
        }
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for j in i + 1..n {
            s -= a.get(i, j) * x[j];
        }
        x[i] = s / a.get(i, i);
    }
    Ok(x)
}

/// Banded square matrix with half-bandwidth `bw`: entries `(i, j)` with
/// `|i - j| > bw` are structurally zero. Row `i` stores offsets
/// `j - i + bw ∈ [0, 2bw]`.
#[derive(Debug, Clone)]
pub struct Banded {
    pub n: usize,
    pub bw: usize,
    data: Vec<f64>,
    factored: bool,
}

impl Banded {
    pub fn zeros(n: usize, bw: usize) -> Self {
        assert!(bw < n.max(1));
        Banded { n, bw, data: vec![0.0; n * (2 * bw + 1)], factored: false }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n && j < self.n);
        debug_assert!(j + self.bw >= i && j <= i + self.bw, "outside band: ({i},{j})");
        i * (2 * self.bw + 1) + (j + self.bw - i)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j + self.bw < i || j > i + self.bw {
            return 0.0;
        }
        self.data[self.idx(i, j)]
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let at = self.idx(i, j);
        self.data[at] += v;
    }

    /// In-place LU **without pivoting**. Sound only for matrices that are
    /// strictly diagonally dominant (the `Id + generator` systems here are,
    /// with margin exactly 1); fails on a vanishing pivot otherwise.
    pub fn factor(&mut self) -> Result<(), LinalgError> {
        assert!(!self.factored);
        let (n, bw) = (self.n, self.bw);
        for k in 0..n {
            let akk = self.data[self.idx(k, k)];
            if akk.abs() <= f64::MIN_POSITIVE * 4.0 {
                return Err(LinalgError::Singular { col: k, pivot: akk.abs() });
            }
            let i_hi = (k + bw).min(n - 1);
            for i in k + 1..=i_hi {
                let at_ik = self.idx(i, k);
                let l = self.data[at_ik] / akk;
                self.data[at_ik] = l;
                if l == 0.0 {
                    continue;
                }
                let j_hi = (k + bw).min(n - 1);
                for j in k + 1..=j_hi {
                    let v = l * self.data[self.idx(k, j)];
                    let at_ij = self.idx(i, j);
                    self.data[at_ij] -= v;
                }
            }
        }
        self.factored = true;
        Ok(())
    }

    /// Solve with the stored factors (call [`Banded::factor`] first).
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert!(self.factored, "solve before factor");
        assert_eq!(b.len(), self.n);
        let (n, bw) = (self.n, self.bw);
        let mut x = b.to_vec();
        for i in 0..n {
            let j_lo = i.saturating_sub(bw);
            let mut s = x[i];
            for j in j_lo..i {
                s -= self.data[self.idx(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let j_hi = (i + bw).min(n - 1);
            let mut s = x[i];
            for j in i + 1..=j_hi {
                s -= self.data[self.idx(i, j)] * x[j];
            }
            x[i] = s / self.data[self.idx(i, i)];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    #[test]
    fn dense_solve_recovers_known_solution() {
        let a = DMat::from_rows(&[
            vec![2.0, 1.0, 0.0],
            vec![1.0, 3.0, 1.0],
            vec![0.0, 1.0, 4.0],
        ]);
        let x_true = vec![1.0, -2.0, 0.5];
        let b = a.matvec(&x_true);
        let x = solve_dense(a, &b).unwrap();
        for (xi, ti) in x.iter().zip(&x_true) {
            assert_abs_diff_eq!(xi, ti, epsilon = 1e-12);
        }
    }

    #[test]
    fn dense_solve_rejects_singular() {
        let a = DMat::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(matches!(solve_dense(a, &[1.0, 1.0]), Err(LinalgError::Singular { .. })));
    }

    #[test]
    fn dense_solve_needs_pivoting_cases() {
        // Zero in the (0,0) slot: plain elimination would divide by zero.
        let a = DMat::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let x = solve_dense(a, &[3.0, 7.0]).unwrap();
        assert_abs_diff_eq!(x[0], 7.0, epsilon = 1e-14);
        assert_abs_diff_eq!(x[1], 3.0, epsilon = 1e-14);
    }

    #[test]
    fn banded_matches_dense_on_random_dominant_systems() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for trial in 0..20 {
            let n = 3 + (trial % 17);
            let bw = trial % 4.min(n - 1).max(1);
            let bw = bw.min(n - 1);
            let mut band = Banded::zeros(n, bw);
            let mut dense = DMat::zeros(n, n);
            for i in 0..n {
                let mut off_sum = 0.0;
                for j in i.saturating_sub(bw)..=(i + bw).min(n - 1) {
                    if i == j {
                        continue;
                    }
                    let v: f64 = rng.random_range(-1.0..1.0);
                    band.add(i, j, v);
                    dense.set(i, j, v);
                    off_sum += v.abs();
                }
                let d = off_sum + 1.0 + rng.random_range(0.0..1.0);
                band.add(i, i, d);
                dense.set(i, i, d);
            }
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let x_dense = solve_dense(dense, &b).unwrap();
            band.factor().unwrap();
            let x_band = band.solve(&b);
            for (a, c) in x_band.iter().zip(&x_dense) {
                assert_abs_diff_eq!(a, c, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn banded_tridiagonal_hand_case() {
        // [[2,-1,0],[-1,2,-1],[0,-1,2]] x = [1,0,1] has x = [1,1,1].
        let mut m = Banded::zeros(3, 1);
        for i in 0..3 {
            m.add(i, i, 2.0);
        }
        m.add(0, 1, -1.0);
        m.add(1, 0, -1.0);
        m.add(1, 2, -1.0);
        m.add(2, 1, -1.0);
        m.factor().unwrap();
        let x = m.solve(&[1.0, 0.0, 1.0]);
        for xi in x {
            assert_abs_diff_eq!(xi, 1.0, epsilon = 1e-14);
        }
    }
}
