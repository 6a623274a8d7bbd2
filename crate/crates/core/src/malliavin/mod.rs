//! Discrete Malliavin calculus on Poisson configuration space.
//!
//! The central objects:
//!
//! * the add-one-point gradient `(∇_x F)(ω) = F(ω + δ_x) − F(ω)`;
//! * the Ornstein–Uhlenbeck (Mehler) semigroup
//!   `P_t F(ω) = E[F(thin_{e^{−t}}(ω) ∪ η_t)]` with `η_t` a fresh Poisson
//!   draw at `(1 − e^{−t})` times the reference intensity, whose generator
//!   satisfies `∇ P_t = e^{−t} P_t ∇`;
//! * its resolvent `(I + ℒ)^{−1} = ∫ e^{−t} P_t dt`, sampled by Exp(1)
//!   time randomization;
//! * Girsanov densities of intensity tilts, whose gradient has the product
//!   form `∇_x L = (h(x)/ref − 1) · L`.
//!
//! Monte Carlo versions live here; `engine` carries the exact
//! finite-state counterparts that the MC estimators are verified against.

pub mod charlier;
pub mod engine;

pub use charlier::{charlier, charlier_table};
pub use engine::{EigencheckRow, FiniteCarrierModel, MalliavinError};

use crate::config::{Configuration, Point, Window};
use crate::numeric::mean_se;
use crate::rng::Stream;
use crate::simulate::{
    sample_poisson_homogeneous, thin_configuration, IntensityFunction, SimError,
};
use rand_distr::{Distribution, Exp};

/// `F(ω + δ_x) − F(ω)`.
pub fn discrete_gradient(
    f: impl Fn(&Configuration) -> f64,
    at: &Configuration,
    x: &Point,
) -> f64 {
    f(&at.with_atom(x)) - f(at)
}

/// Girsanov density at `cfg` of the Poisson law with intensity `h` relative
/// to the homogeneous reference with rate `reference`:
/// `L(ω) = exp(−∫ (h − ref)) · Π_{x ∈ ω} h(x)/ref`.
pub fn girsanov_density(
    h: &IntensityFunction,
    reference: f64,
    window: &Window,
    cfg: &Configuration,
) -> Result<f64, SimError> {
    if !(reference > 0.0) || !reference.is_finite() {
        return Err(SimError::BadRate(reference));
    }
    if window.dim() != 1 {
        return Err(SimError::NotOneDimensional);
    }
    let (a, b) = window.bounds()[0];
    let integral = h.integrate_map(a, b, |v| v - reference)?;
    let mut prod = (-integral).exp();
    for p in cfg.points() {
        prod *= h.eval(p.coords()[0])? / reference;
    }
    Ok(prod)
}

/// One Mehler draw: thin by `e^{−t}`, refresh at rate `(1 − e^{−t})·ref`.
fn mehler_draw(
    at: &Configuration,
    t: f64,
    reference: f64,
    window: &Window,
    rng: &mut Stream,
) -> Result<Configuration, SimError> {
    let keep = (-t).exp();
    let kept = thin_configuration(at, keep, rng);
    let refresh = (1.0 - keep) * reference;
    if refresh > 0.0 {
        Ok(kept.union(&sample_poisson_homogeneous(refresh, window, rng)?))
    } else {
        Ok(kept)
    }
}

/// Monte Carlo `P_t F(ω)` under the reference Poisson rate; returns
/// `(mean, standard error)`.
pub fn ou_semigroup_mc(
    f: impl Fn(&Configuration) -> f64,
    at: &Configuration,
    t: f64,
    reference: f64,
    window: &Window,
    n_samples: usize,
    rng: &mut Stream,
) -> Result<(f64, f64), SimError> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(SimError::BadHorizon(t));
    }
    if !(reference > 0.0) || !reference.is_finite() {
        return Err(SimError::BadRate(reference));
    }
    assert!(n_samples >= 2, "need at least two samples for a standard error");
    let vals: Vec<f64> = (0..n_samples)
        .map(|_| Ok(f(&mehler_draw(at, t, reference, window, rng)?)))
        .collect::<Result<_, SimError>>()?;
    Ok(mean_se(&vals))
}

/// Monte Carlo resolvent `(I + ℒ)^{−1} F(ω) = ∫_0^∞ e^{−t} P_t F(ω) dt`:
/// each sample draws `T ~ Exp(1)` and a single Mehler draw at time `T`.
pub fn resolvent_mc(
    f: impl Fn(&Configuration) -> f64,
    at: &Configuration,
    reference: f64,
    window: &Window,
    n_samples: usize,
    rng: &mut Stream,
) -> Result<(f64, f64), SimError> {
    if !(reference > 0.0) || !reference.is_finite() {
        return Err(SimError::BadRate(reference));
    }
    assert!(n_samples >= 2, "need at least two samples for a standard error");
    let exp = Exp::new(1.0).expect("unit rate");
    let vals: Vec<f64> = (0..n_samples)
        .map(|_| {
            let t: f64 = exp.sample(rng);
            Ok(f(&mehler_draw(at, t, reference, window, rng)?))
        })
        .collect::<Result<_, SimError>>()?;
    Ok(mean_se(&vals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn cfg(xs: &[f64]) -> Configuration {
        Configuration::new(xs.iter().map(|&x| Point::scalar(x).unwrap()).collect()).unwrap()
    }

    #[test]
    fn gradient_of_count_is_one() {
        let f = |c: &Configuration| c.len() as f64;
        let base = cfg(&[0.2, 0.7]);
        assert_eq!(discrete_gradient(f, &base, &Point::scalar(0.5).unwrap()), 1.0);
    }

    #[test]
    fn girsanov_density_closed_forms() {
        let window = Window::interval(0.0, 1.0).unwrap();
        // Constant tilt h ≡ c with reference 1: L(ω) = e^{−(c−1)} c^{|ω|}.
        let h = IntensityFunction::constant(2.0).unwrap();
        let l = girsanov_density(&h, 1.0, &window, &cfg(&[0.3, 0.6])).unwrap();
        assert!((l - (-1.0f64).exp() * 4.0).abs() < 1e-14);
        // h equal to the reference: L ≡ 1 for every configuration.
        let h1 = IntensityFunction::constant(3.0).unwrap();
        let l = girsanov_density(&h1, 3.0, &window, &cfg(&[0.1, 0.5, 0.9])).unwrap();
        assert!((l - 1.0).abs() < 1e-14);
        // An atom where h = 0 kills the density.
        let hz = IntensityFunction::piecewise(vec![0.0, 0.5, 1.0], vec![0.0, 2.0]).unwrap();
        let l = girsanov_density(&hz, 1.0, &window, &cfg(&[0.25])).unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn girsanov_gradient_is_multiplicative() {
        // Adding an atom at s multiplies L by h(s)/ref, so
        // ∇_s L = (h(s)/ref − 1)·L with no approximation.
        let window = Window::interval(0.0, 1.0).unwrap();
        let h = IntensityFunction::callback(|t| 0.5 + t * t, 2.0, 128).unwrap();
        let base = cfg(&[0.2, 0.8]);
        let l0 = girsanov_density(&h, 1.0, &window, &base).unwrap();
        for &s in &[0.1, 0.5, 0.95] {
            let grad = girsanov_density(&h, 1.0, &window, &base.with_atom(&Point::scalar(s).unwrap()))
                .unwrap()
                - l0;
            let expected = (h.eval(s).unwrap() - 1.0) * l0;
            assert!((grad - expected).abs() < 1e-12 * l0.abs().max(1.0), "s = {s}");
        }
    }

    #[test]
    fn girsanov_mc_expectations() {
        // Under Poisson(ref): E[L] = 1, E[L²] = exp(∫ (h−ref)²/ref).
        let window = Window::interval(0.0, 1.0).unwrap();
        let h = IntensityFunction::callback(|t| 1.0 + t, 2.0, 128).unwrap();
        let mut rng = substream(50, 0);
        let n = 60_000;
        let mut l1 = Vec::with_capacity(n);
        let mut l2 = Vec::with_capacity(n);
        for _ in 0..n {
            let omega = sample_poisson_homogeneous(1.0, &window, &mut rng).unwrap();
            let l = girsanov_density(&h, 1.0, &window, &omega).unwrap();
            l1.push(l);
            l2.push(l * l);
        }
        let (m1, se1) = mean_se(&l1);
        assert!((m1 - 1.0).abs() < 3.0 * se1, "E[L] = {m1} (se {se1})");
        let (m2, se2) = mean_se(&l2);
        let truth = (1.0f64 / 3.0).exp();
        assert!((m2 - truth).abs() < 3.0 * se2, "E[L²] = {m2} vs {truth} (se {se2})");
    }

    #[test]
    fn semigroup_mc_matches_engine_exact() {
        // One cell, reference rate 1 on [0, 1]: count functional tables.
        let eng = FiniteCarrierModel::new(vec![1.0], 40).unwrap();
        let window = Window::interval(0.0, 1.0).unwrap();
        let table = eng.charlier_product_table(&[2]).unwrap();
        let f = eng.table_functional(&table, &window);
        let base = cfg(&[0.15, 0.55, 0.85]); // 3 atoms → count state 3
        let t = 0.8;
        let exact_tbl = eng.exact_semigroup(t, &table).unwrap();
        let exact = exact_tbl[eng.index_of_counts(&[3])];
        let mut rng = substream(51, 0);
        let (mc, se) = ou_semigroup_mc(&f, &base, t, 1.0, &window, 40_000, &mut rng).unwrap();
        assert!((mc - exact).abs() < 3.0 * se, "{mc} vs {exact} (se {se})");
    }

    #[test]
    fn resolvent_mc_matches_engine_exact() {
        let eng = FiniteCarrierModel::new(vec![1.0], 40).unwrap();
        let window = Window::interval(0.0, 1.0).unwrap();
        let table = eng.charlier_product_table(&[1]).unwrap();
        let f = eng.table_functional(&table, &window);
        let base = cfg(&[0.4, 0.6]);
        let exact_tbl = eng.exact_resolvent(&table).unwrap();
        let exact = exact_tbl[eng.index_of_counts(&[2])];
        // C_1 at count 2 with θ = 1: value 1; resolvent shrinks by 1/2.
        assert!((exact - 0.5).abs() < 1e-9);
        let mut rng = substream(52, 0);
        let (mc, se) = resolvent_mc(&f, &base, 1.0, &window, 60_000, &mut rng).unwrap();
        assert!((mc - exact).abs() < 3.0 * se, "{mc} vs {exact} (se {se})");
    }

    #[test]
    fn semigroup_mc_at_zero_is_pointwise() {
        let window = Window::interval(0.0, 1.0).unwrap();
        let f = |c: &Configuration| (c.len() * c.len()) as f64;
        let base = cfg(&[0.1, 0.2, 0.3]);
        let mut rng = substream(53, 0);
        let (mc, se) = ou_semigroup_mc(f, &base, 0.0, 1.0, &window, 100, &mut rng).unwrap();
        assert_eq!(mc, 9.0);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn commutation_with_gradient_mc() {
        // ∇_x P_t F = e^{−t} P_t ∇_x F, checked by MC with a nonlinear
        // functional at a fixed point x.
        let window = Window::interval(0.0, 1.0).unwrap();
        let f = |c: &Configuration| {
            let n = c.len() as f64;
            n * n - 2.0 * n
        };
        let base = cfg(&[0.3, 0.7]);
        let x = Point::scalar(0.5).unwrap();
        let t = 0.6;
        let n = 120_000;
        // Left side: P_t F(ω + δ_x) − P_t F(ω), antithetic by shared rng
        // streams per side for variance reduction via common seeds.
        let plus = base.with_atom(&x);
        let (l_plus, se1) = ou_semigroup_mc(f, &plus, t, 1.0, &window, n, &mut substream(54, 0)).unwrap();
        let (l_base, se2) = ou_semigroup_mc(f, &base, t, 1.0, &window, n, &mut substream(54, 0)).unwrap();
        let lhs = l_plus - l_base;
        // Right side: e^{−t} P_t (∇_x F)(ω).
        let grad_f = |c: &Configuration| {
            let n = c.len() as f64;
            ((n + 1.0) * (n + 1.0) - 2.0 * (n + 1.0)) - (n * n - 2.0 * n)
        };
        let (r, se3) = ou_semigroup_mc(grad_f, &base, t, 1.0, &window, n, &mut substream(54, 1)).unwrap();
        let rhs = (-t).exp() * r;
        let se = (se1 * se1 + se2 * se2 + se3 * se3).sqrt();
        assert!((lhs - rhs).abs() < 3.0 * se, "{lhs} vs {rhs} (se {se})");
    }
}
