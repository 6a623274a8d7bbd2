//! Samplers: Poisson processes on a window, and Markov-modulated Poisson
//! processes driven by an irreducible finite CTMC.
//!
//! Everything draws from an explicit [`Stream`](crate::rng::Stream), so
//! every sampler is reproducible from a seed. The coupled Poisson sampler
//! produces a *pair* of processes on the same window whose common atoms are
//! bitwise identical — the superposition coupling, under which the expected
//! pair distance is small while both marginals stay exact.

use crate::config::{ConfigError, Configuration, Point, Window};
use crate::linalg::{solve_dense, DMat, LinalgError};
use crate::numeric::simpson;
use crate::rng::Stream;
use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("rate {0} must be positive and finite")]
    BadRate(f64),
    #[error("intensity at t = {t} is {value}, which is negative or non-finite")]
    NegativeIntensity { t: f64, value: f64 },
    #[error("intensity at t = {t} is {value}, above its stated sup bound {bound}")]
    SupBoundViolated { t: f64, value: f64, bound: f64 },
    #[error("inhomogeneous sampling needs a one-dimensional window")]
    NotOneDimensional,
    #[error("t = {t} lies outside the piecewise definition span [{lo}, {hi}]")]
    OutsideSupport { t: f64, lo: f64, hi: f64 },
    #[error("piecewise intensity needs strictly increasing knots with one more knot than values ({knots} knots, {values} values)")]
    BadPiecewise { knots: usize, values: usize },
    #[error("generator must be {m}x{m}, got {len} entries")]
    NonSquare { m: usize, len: usize },
    #[error("generator row {row} sums to {sum:e}, not 0")]
    RowSumNonzero { row: usize, sum: f64 },
    #[error("off-diagonal entry q[{row}][{col}] = {value} is negative")]
    NegativeOffDiagonal { row: usize, col: usize, value: f64 },
    #[error("chain is reducible: state {state} is not {direction} state 0")]
    Reducible { state: usize, direction: &'static str },
    #[error("modulated rate {value} for state {state} must be nonnegative and finite")]
    BadModulatedRate { state: usize, value: f64 },
    #[error("stationary distribution solve failed: {0}")]
    Singular(#[from] LinalgError),
    #[error("stationary residual {residual:e} exceeds 1e-10")]
    StationaryResidual { residual: f64 },
    #[error("model JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("horizon {0} must be positive and finite")]
    BadHorizon(f64),
    #[error("start state {0} is out of range")]
    BadStart(usize),
    #[error("path times must start at 0, increase strictly, and stay below the horizon")]
    BadPath,
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// A deterministic intensity `h(t)` on (a span of) the real line.
#[derive(Clone)]
pub enum IntensityFunction {
    Constant(f64),
    /// `values[i]` on `[knots[i], knots[i+1])`; defined only on the knot
    /// span.
    PiecewiseConstant { knots: Vec<f64>, values: Vec<f64> },
    /// Arbitrary nonnegative function with a caller-certified sup bound and
    /// a Simpson subdivision count for integrals.
    Callback { f: Arc<dyn Fn(f64) -> f64 + Send + Sync>, sup_bound: f64, n_quad: usize },
}

impl fmt::Debug for IntensityFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IntensityFunction::Constant(v) => write!(f, "Constant({v})"),
            IntensityFunction::PiecewiseConstant { knots, values } => f
                .debug_struct("PiecewiseConstant")
                .field("knots", knots)
                .field("values", values)
                .finish(),
            IntensityFunction::Callback { sup_bound, n_quad, .. } => f
                .debug_struct("Callback")
                .field("sup_bound", sup_bound)
                .field("n_quad", n_quad)
                .finish(),
        }
    }
}

impl IntensityFunction {
    pub fn constant(v: f64) -> Result<Self, SimError> {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(SimError::NegativeIntensity { t: f64::NAN, value: v });
        }
        Ok(IntensityFunction::Constant(v))
    }

    pub fn piecewise(knots: Vec<f64>, values: Vec<f64>) -> Result<Self, SimError> {
        if knots.len() != values.len() + 1
            || values.is_empty()
            || knots.windows(2).any(|w| !(w[0] < w[1]))
            || knots.iter().any(|k| !k.is_finite())
        {
            return Err(SimError::BadPiecewise { knots: knots.len(), values: values.len() });
        }
        if let Some((i, &v)) = values.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
            return Err(SimError::NegativeIntensity { t: knots[i], value: v });
        }
        Ok(IntensityFunction::PiecewiseConstant { knots, values })
    }

    pub fn callback(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        sup_bound: f64,
        n_quad: usize,
    ) -> Result<Self, SimError> {
        if !(sup_bound > 0.0) || !sup_bound.is_finite() {
            return Err(SimError::BadRate(sup_bound));
        }
        Ok(IntensityFunction::Callback { f: Arc::new(f), sup_bound, n_quad: n_quad.max(16) })
    }

    pub fn eval(&self, t: f64) -> Result<f64, SimError> {
        let v = match self {
            IntensityFunction::Constant(v) => *v,
            IntensityFunction::PiecewiseConstant { knots, values } => {
                let (lo, hi) = (knots[0], *knots.last().unwrap());
                if t < lo || t > hi {
                    return Err(SimError::OutsideSupport { t, lo, hi });
                }
                // partition_point gives the first knot > t; value index is
                // one less, clamped so t == hi falls in the last segment.
                let k = knots.partition_point(|&x| x <= t).clamp(1, values.len());
                values[k - 1]
            }
            IntensityFunction::Callback { f, .. } => f(t),
        };
        if !(v >= 0.0) || !v.is_finite() {
            return Err(SimError::NegativeIntensity { t, value: v });
        }
        Ok(v)
    }

    /// Supremum of `h` over `[a, b]` (certified bound for the callback
    /// variant).
    pub fn sup_on(&self, a: f64, b: f64) -> Result<f64, SimError> {
        match self {
            IntensityFunction::Constant(v) => Ok(*v),
            IntensityFunction::PiecewiseConstant { knots, values } => {
                let (lo, hi) = (knots[0], *knots.last().unwrap());
                if a < lo || b > hi {
                    return Err(SimError::OutsideSupport { t: if a < lo { a } else { b }, lo, hi });
                }
                let mut sup = 0.0f64;
                for (i, &v) in values.iter().enumerate() {
                    if knots[i] < b && knots[i + 1] > a {
                        sup = sup.max(v);
                    }
                }
                Ok(sup.max(self.eval(a)?).max(self.eval(b)?))
            }
            IntensityFunction::Callback { sup_bound, .. } => Ok(*sup_bound),
        }
    }

    /// `∫_a^b g(h(t)) dt` — exact segment sums for the constant and
    /// piecewise variants, composite Simpson for callbacks.
    pub fn integrate_map(&self, a: f64, b: f64, g: impl Fn(f64) -> f64) -> Result<f64, SimError> {
        assert!(a < b, "empty integration range");
        match self {
            IntensityFunction::Constant(v) => Ok(g(*v) * (b - a)),
            IntensityFunction::PiecewiseConstant { knots, values } => {
                let (lo, hi) = (knots[0], *knots.last().unwrap());
                if a < lo || b > hi {
                    return Err(SimError::OutsideSupport { t: if a < lo { a } else { b }, lo, hi });
                }
                let mut total = 0.0;
                for (i, &v) in values.iter().enumerate() {
                    let (s, e) = (knots[i].max(a), knots[i + 1].min(b));
                    if s < e {
                        total += g(v) * (e - s);
                    }
                }
                Ok(total)
            }
            IntensityFunction::Callback { f, n_quad, .. } => {
                Ok(simpson(|t| g(f(t)), a, b, *n_quad))
            }
        }
    }

    /// Spot-check nonnegativity, finiteness, and the sup bound on a uniform
    /// grid over `[a, b]`.
    pub fn validate_on(&self, a: f64, b: f64, n_grid: usize) -> Result<(), SimError> {
        let sup = self.sup_on(a, b)?;
        let n = n_grid.max(2);
        for k in 0..=n {
            let t = a + (b - a) * k as f64 / n as f64;
            let v = self.eval(t)?;
            if v > sup * (1.0 + 1e-12) {
                return Err(SimError::SupBoundViolated { t, value: v, bound: sup });
            }
        }
        Ok(())
    }
}

fn poisson_count(mean: f64, rng: &mut Stream) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let n: f64 = Poisson::new(mean).expect("positive finite mean").sample(rng);
    n as usize
}

fn uniform_point(window: &Window, rng: &mut Stream) -> Point {
    let coords: Vec<f64> =
        window.bounds().iter().map(|&(lo, hi)| rng.random_range(lo..hi)).collect();
    Point::new(coords).expect("window bounds are finite")
}

/// Homogeneous Poisson process with the given rate density on a window.
pub fn sample_poisson_homogeneous(
    rate: f64,
    window: &Window,
    rng: &mut Stream,
) -> Result<Configuration, SimError> {
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(SimError::BadRate(rate));
    }
    let n = poisson_count(rate * window.volume(), rng);
    let pts = (0..n).map(|_| uniform_point(window, rng)).collect();
    Ok(Configuration::new(pts)?)
}

/// Inhomogeneous Poisson process on a one-dimensional window, by thinning a
/// homogeneous process at the intensity's sup.
pub fn sample_poisson_inhomogeneous(
    h: &IntensityFunction,
    window: &Window,
    rng: &mut Stream,
) -> Result<Configuration, SimError> {
    if window.dim() != 1 {
        return Err(SimError::NotOneDimensional);
    }
    let (a, b) = window.bounds()[0];
    let sup = h.sup_on(a, b)?;
    if sup == 0.0 {
        return Ok(Configuration::empty());
    }
    let n = poisson_count(sup * (b - a), rng);
    let mut pts = Vec::new();
    for _ in 0..n {
        let t = rng.random_range(a..b);
        let v = h.eval(t)?;
        if v > sup * (1.0 + 1e-12) {
            return Err(SimError::SupBoundViolated { t, value: v, bound: sup });
        }
        if rng.random::<f64>() * sup < v {
            pts.push(Point::scalar(t)?);
        }
    }
    Ok(Configuration::new(pts)?)
}

/// A pair of homogeneous Poisson processes with rates `rate_a`, `rate_b`,
/// coupled by superposition: both contain a common `min(rate_a, rate_b)`
/// core (bitwise-identical atoms) plus an independent excess on the side
/// with the larger rate. Marginals are exact.
pub fn sample_poisson_coupled(
    rate_a: f64,
    rate_b: f64,
    window: &Window,
    rng: &mut Stream,
) -> Result<(Configuration, Configuration), SimError> {
    for r in [rate_a, rate_b] {
        if !(r > 0.0) || !r.is_finite() {
            return Err(SimError::BadRate(r));
        }
    }
    let common = rate_a.min(rate_b);
    let core = sample_poisson_homogeneous(common, window, rng)?;
    let excess_rate = (rate_a - rate_b).abs();
    let excess = if excess_rate > 0.0 {
        let n = poisson_count(excess_rate * window.volume(), rng);
        let pts = (0..n).map(|_| uniform_point(window, rng)).collect();
        Configuration::new(pts)?
    } else {
        Configuration::empty()
    };
    let bigger = core.union(&excess);
    if rate_a >= rate_b {
        Ok((bigger, core))
    } else {
        Ok((core, bigger))
    }
}

/// Keep each atom independently with probability `p`.
pub fn thin_configuration(cfg: &Configuration, p: f64, rng: &mut Stream) -> Configuration {
    assert!((0.0..=1.0).contains(&p), "thinning probability out of range");
    let pts: Vec<Point> =
        cfg.points().iter().filter(|_| rng.random::<f64>() < p).cloned().collect();
    Configuration::new(pts).expect("subset of a valid configuration")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartState {
    Fixed(usize),
    /// Draw the initial state from the stationary distribution.
    Stationary,
}

/// An irreducible CTMC generator with per-state modulated rates; the
/// stationary distribution is computed (and certified) at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct CtmcModel {
    m: usize,
    q: Vec<f64>, // row-major m×m
    rates: Vec<f64>,
    stationary: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelJson {
    m: usize,
    q: Vec<Vec<f64>>,
    rates: Vec<f64>,
}

impl CtmcModel {
    /// `q` is the row-major generator: nonnegative off-diagonals, zero row
    /// sums, irreducible (every state reachable from and reaching state 0).
    pub fn new(m: usize, q: Vec<f64>, rates: Vec<f64>) -> Result<Self, SimError> {
        if m == 0 || q.len() != m * m {
            return Err(SimError::NonSquare { m, len: q.len() });
        }
        if rates.len() != m {
            return Err(SimError::NonSquare { m, len: rates.len() });
        }
        let scale = q.iter().fold(1.0f64, |a, &x| a.max(x.abs()));
        for i in 0..m {
            for j in 0..m {
                let v = q[i * m + j];
                if !v.is_finite() {
                    return Err(SimError::NegativeOffDiagonal { row: i, col: j, value: v });
                }
                if i != j && v < 0.0 {
                    return Err(SimError::NegativeOffDiagonal { row: i, col: j, value: v });
                }
            }
            let sum: f64 = q[i * m..(i + 1) * m].iter().sum();
            if sum.abs() > 1e-12 * scale {
                return Err(SimError::RowSumNonzero { row: i, sum });
            }
        }
        for (i, &r) in rates.iter().enumerate() {
            if !(r >= 0.0) || !r.is_finite() {
                return Err(SimError::BadModulatedRate { state: i, value: r });
            }
        }
        // Irreducibility: BFS along positive off-diagonals, forward and
        // backward from state 0.
        for (direction, transpose) in [("reachable from", false), ("able to reach", true)] {
            let mut seen = vec![false; m];
            seen[0] = true;
            let mut stack = vec![0usize];
            while let Some(i) = stack.pop() {
                for j in 0..m {
                    let edge = if transpose { q[j * m + i] } else { q[i * m + j] };
                    if i != j && edge > 0.0 && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            if let Some(s) = seen.iter().position(|&s| !s) {
                return Err(SimError::Reducible { state: s, direction });
            }
        }

        // Stationary distribution: solve Qᵀπ = 0 with the last equation
        // replaced by Σπ = 1, then certify ‖πQ‖∞.
        let stationary = if m == 1 {
            vec![1.0]
        } else {
            let mut a = DMat::zeros(m, m);
            for i in 0..m {
                for j in 0..m {
                    a.set(i, j, q[j * m + i]);
                }
            }
            for j in 0..m {
                a.set(m - 1, j, 1.0);
            }
            let mut b = vec![0.0; m];
            b[m - 1] = 1.0;
            let mut pi = solve_dense(a, &b)?;
            for p in pi.iter_mut() {
                if *p < 0.0 && *p > -1e-13 {
                    *p = 0.0;
                }
            }
            let total: f64 = pi.iter().sum();
            pi.iter_mut().for_each(|p| *p /= total);
            let mut residual = 0.0f64;
            for j in 0..m {
                let r: f64 = (0..m).map(|i| pi[i] * q[i * m + j]).sum();
                residual = residual.max(r.abs());
            }
            if residual > 1e-10 * scale {
                return Err(SimError::StationaryResidual { residual });
            }
            pi
        };
        Ok(CtmcModel { m, q, rates, stationary })
    }

    pub fn n_states(&self) -> usize {
        self.m
    }

    pub fn generator(&self) -> &[f64] {
        &self.q
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    pub fn min_rate(&self) -> f64 {
        self.rates.iter().fold(f64::INFINITY, |a, &r| a.min(r))
    }

    pub fn max_rate(&self) -> f64 {
        self.rates.iter().fold(0.0f64, |a, &r| a.max(r))
    }

    pub fn to_json(&self) -> String {
        let j = ModelJson {
            m: self.m,
            q: (0..self.m).map(|i| self.q[i * self.m..(i + 1) * self.m].to_vec()).collect(),
            rates: self.rates.clone(),
        };
        serde_json::to_string_pretty(&j).expect("finite floats serialize")
    }

    /// Parse and fully re-validate a model from JSON
    /// (`{"m": …, "q": [[…]], "rates": […]}`).
    pub fn from_json(s: &str) -> Result<Self, SimError> {
        let j: ModelJson = serde_json::from_str(s)?;
        let mut q = Vec::with_capacity(j.m * j.m);
        for row in &j.q {
            q.extend_from_slice(row);
        }
        if j.q.len() != j.m {
            return Err(SimError::NonSquare { m: j.m, len: q.len() });
        }
        CtmcModel::new(j.m, q, j.rates)
    }

    /// Gillespie path simulation on `[0, horizon]`.
    pub fn sample_path(
        &self,
        horizon: f64,
        start: StartState,
        rng: &mut Stream,
    ) -> Result<CtmcPath, SimError> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(SimError::BadHorizon(horizon));
        }
        let mut state = match start {
            StartState::Fixed(s) => {
                if s >= self.m {
                    return Err(SimError::BadStart(s));
                }
                s
            }
            StartState::Stationary => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut chosen = self.m - 1;
                for (i, &p) in self.stationary.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        chosen = i;
                        break;
                    }
                }
                chosen
            }
        };
        let mut times = vec![0.0];
        let mut states = vec![state];
        let mut t = 0.0;
        loop {
            let hold = -self.q[state * self.m + state];
            if hold <= 0.0 {
                break; // absorbing in practice only for m = 1
            }
            t += Exp::new(hold).expect("positive rate").sample(rng);
            if t >= horizon {
                break;
            }
            let mut u = rng.random::<f64>() * hold;
            let mut next = state;
            for j in 0..self.m {
                if j == state {
                    continue;
                }
                let rate = self.q[state * self.m + j];
                if u < rate {
                    next = j;
                    break;
                }
                u -= rate;
            }
            state = next;
            times.push(t);
            states.push(state);
        }
        CtmcPath::from_parts(times, states, horizon)
    }
}

/// A CTMC trajectory: `states[k]` holds on `[times[k], times[k+1])` (the
/// last state up to the horizon).
#[derive(Debug, Clone, PartialEq)]
pub struct CtmcPath {
    times: Vec<f64>,
    states: Vec<usize>,
    horizon: f64,
}

impl CtmcPath {
    pub fn from_parts(times: Vec<f64>, states: Vec<usize>, horizon: f64) -> Result<Self, SimError> {
        if !(horizon > 0.0)
            || times.is_empty()
            || times.len() != states.len()
            || times[0] != 0.0
            || times.windows(2).any(|w| !(w[0] < w[1]))
            || *times.last().unwrap() >= horizon
        {
            return Err(SimError::BadPath);
        }
        Ok(CtmcPath { times, states, horizon })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn n_jumps(&self) -> usize {
        self.states.len() - 1
    }

    /// `(start, end, state)` triples covering `[0, horizon]`.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, usize)> + '_ {
        (0..self.states.len()).map(move |k| {
            let end = if k + 1 < self.times.len() { self.times[k + 1] } else { self.horizon };
            (self.times[k], end, self.states[k])
        })
    }

    /// Total time spent in each of `m` states.
    pub fn occupation(&self, m: usize) -> Vec<f64> {
        let mut occ = vec![0.0; m];
        for (s, e, state) in self.segments() {
            occ[state] += e - s;
        }
        occ
    }

    /// `(∫ λ(s) ds, ∫ λ(s)² ds)` along the path for per-state rates.
    pub fn integrals(&self, rates: &[f64]) -> (f64, f64) {
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for (s, e, state) in self.segments() {
            let dur = e - s;
            s1 += dur * rates[state];
            s2 += dur * rates[state] * rates[state];
        }
        (s1, s2)
    }
}

/// An MMPP draw: a modulating path plus the conditionally Poisson atoms.
pub fn sample_mmpp(
    model: &CtmcModel,
    horizon: f64,
    start: StartState,
    rng: &mut Stream,
) -> Result<(CtmcPath, Configuration), SimError> {
    let path = model.sample_path(horizon, start, rng)?;
    let atoms = sample_mmpp_given_path(model, &path, rng)?;
    Ok((path, atoms))
}

/// The conditionally Poisson atoms for a fixed modulating path.
pub fn sample_mmpp_given_path(
    model: &CtmcModel,
    path: &CtmcPath,
    rng: &mut Stream,
) -> Result<Configuration, SimError> {
    let mut pts = Vec::new();
    for (s, e, state) in path.segments() {
        let rate = model.rates()[state];
        if rate <= 0.0 || e <= s {
            continue;
        }
        let n = poisson_count(rate * (e - s), rng);
        for _ in 0..n {
            pts.push(Point::scalar(rng.random_range(s..e))?);
        }
    }
    Ok(Configuration::new(pts)?)
}
