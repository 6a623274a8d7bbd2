//! Charlier polynomials `C_n(k; θ)`, the orthogonal family of the Poisson
//! distribution with mean `θ` and the chaos eigenfunctions of the
//! number-operator machinery in `engine`.
//!
//! Three-term recurrence:
//! `C_0 = 1`, `C_1 = k - θ`,
//! `C_{n+1}(k) = (k - n - θ) C_n(k) - n θ C_{n-1}(k)`.
//!
//! Orthogonality: `E[C_m(N) C_n(N)] = δ_{mn} n! θ^n` for `N ~ Poisson(θ)`.
//! Discrete derivative lowers the order: `C_n(k+1) - C_n(k) = n C_{n-1}(k)`.

pub fn charlier(n: usize, k: f64, theta: f64) -> f64 {
    match n {
        0 => 1.0,
        1 => k - theta,
        _ => {
            let mut prev = 1.0; // C_{j-1}
            let mut cur = k - theta; // C_j
            for j in 1..n {
                let next = (k - j as f64 - theta) * cur - j as f64 * theta * prev;
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}

/// Values `C_n(k; θ)` for `k = 0..=k_max`.
pub fn charlier_table(n: usize, theta: f64, k_max: usize) -> Vec<f64> {
    (0..=k_max).map(|k| charlier(n, k as f64, theta)).collect()
}
