//! Finite point configurations and the ground metrics on configuration space.
//!
//! A configuration is a finite multiset of atoms in `R^d`, kept in canonical
//! (lexicographic) order so that serialization is stable and multiset
//! operations are merge walks. Atom identity is **bitwise** coordinate
//! equality (`-0.0` and `0.0` are distinct atoms); this keeps ordering,
//! equality, and JSON round-trips exactly consistent.
//!
//! Two ground distances are provided:
//!
//! * `d1`: a total-variation style distance, `scale · sup_A |a(A) - b(A)|`
//!   over measurable `A`, which for multisets is
//!   `scale · max(|a \ b|, |b \ a|)`. The printed convention uses
//!   `scale = 2`; adding a single atom then moves a configuration by exactly
//!   2. The scale is explicit on [`GroundMetric`] because the bound theorems
//!   are tight only under the unit-increment normalization (`scale = 1`) —
//!   see `bounds` for how the constant is surfaced rather than guessed.
//! * `d2`: for equal cardinalities, the square root of the minimum-cost
//!   perfect matching under the truncated ground cost
//!   `d0(x, y) = min(‖x - y‖, c)`; infinite for unequal cardinalities.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("coordinate {value} is not finite")]
    NonFinite { value: f64 },
    #[error("point {point:?} lies outside the window")]
    OutOfWindow { point: Vec<f64> },
    #[error("window interval {index} is empty or unordered ({lo}, {hi})")]
    EmptyInterval { index: usize, lo: f64, hi: f64 },
    #[error("window has no intervals")]
    ZeroDimension,
    #[error("configuration JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("points of dimension {got} in a configuration of dimension {expected}")]
    MixedDimension { expected: usize, got: usize },
}

/// An atom location in `R^d` with finite coordinates.
#[derive(Debug, Clone)]
pub struct Point {
    coords: Vec<f64>,
}

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self, ConfigError> {
        if let Some(&bad) = coords.iter().find(|c| !c.is_finite()) {
            return Err(ConfigError::NonFinite { value: bad });
        }
        Ok(Point { coords })
    }

    /// One-dimensional point.
    pub fn scalar(x: f64) -> Result<Self, ConfigError> {
        Point::new(vec![x])
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Euclidean distance (points of equal dimension).
    pub fn euclid(&self, other: &Point) -> f64 {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch");
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

// Identity is bitwise so that Eq/Ord/Hash-like laws hold exactly; coordinates
// are finite by construction, so total_cmp orders them like the reals apart
// from the -0.0 < 0.0 refinement.
impl PartialEq for Point {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Point {}

impl PartialOrd for Point {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Point {
    fn cmp(&self, other: &Self) -> Ordering {
        for (a, b) in self.coords.iter().zip(&other.coords) {
            match a.total_cmp(b) {
                Ordering::Equal => continue,
                ord => return ord,
            }
        }
        self.coords.len().cmp(&other.coords.len())
    }
}

/// An axis-aligned box `Π [lo_i, hi_i]` with positive volume; the carrier on
/// which processes are sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    bounds: Vec<(f64, f64)>,
}

impl Window {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self, ConfigError> {
        if bounds.is_empty() {
            return Err(ConfigError::ZeroDimension);
        }
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(ConfigError::EmptyInterval { index: i, lo, hi });
            }
        }
        Ok(Window { bounds })
    }

    /// The interval `[lo, hi]` in one dimension.
    pub fn interval(lo: f64, hi: f64) -> Result<Self, ConfigError> {
        Window::new(vec![(lo, hi)])
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn volume(&self) -> f64 {
        self.bounds.iter().map(|(lo, hi)| hi - lo).product()
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.dim() == self.dim()
            && p.coords()
                .iter()
                .zip(&self.bounds)
                .all(|(x, (lo, hi))| *x >= *lo && *x <= *hi)
    }
}

/// A finite configuration: a multiset of atoms in canonical order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Configuration {
    points: Vec<Point>,
}

impl Configuration {
    pub fn empty() -> Self {
        Configuration { points: Vec::new() }
    }

    /// Build from atoms in any order; checks dimensional consistency and
    /// sorts into canonical order.
    pub fn new(mut points: Vec<Point>) -> Result<Self, ConfigError> {
        if let Some(first) = points.first() {
            let d = first.dim();
            if let Some(bad) = points.iter().find(|p| p.dim() != d) {
                return Err(ConfigError::MixedDimension { expected: d, got: bad.dim() });
            }
        }
        points.sort();
        Ok(Configuration { points })
    }

    /// Like [`Configuration::new`] but also requires every atom to lie in
    /// `window`.
    pub fn in_window(points: Vec<Point>, window: &Window) -> Result<Self, ConfigError> {
        if let Some(bad) = points.iter().find(|p| !window.contains(p)) {
            return Err(ConfigError::OutOfWindow { point: bad.coords().to_vec() });
        }
        Configuration::new(points)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Dimension of the atoms, if any.
    pub fn dim(&self) -> Option<usize> {
        self.points.first().map(Point::dim)
    }

    /// The configuration with one extra atom at `p` (the add-one-point map
    /// `ω ↦ ω + ε_p` behind the discrete gradient).
    pub fn with_atom(&self, p: &Point) -> Configuration {
        let at = self.points.partition_point(|q| q < p);
        let mut points = self.points.clone();
        points.insert(at, p.clone());
        Configuration { points }
    }

    /// Multiset union (atom counts add).
    pub fn union(&self, other: &Configuration) -> Configuration {
        let mut points = Vec::with_capacity(self.len() + other.len());
        let (mut i, mut j) = (0, 0);
        while i < self.len() && j < other.len() {
            if self.points[i] <= other.points[j] {
                points.push(self.points[i].clone());
                i += 1;
            } else {
                points.push(other.points[j].clone());
                j += 1;
            }
        }
        points.extend_from_slice(&self.points[i..]);
        points.extend_from_slice(&other.points[j..]);
        Configuration { points }
    }

    /// Serialize as a JSON array of coordinate arrays, e.g. `[[0.1],[0.5]]`.
    /// Values round-trip bit-exactly (shortest-representation float
    /// printing).
    pub fn to_json(&self) -> String {
        let view: Vec<&[f64]> = self.points.iter().map(Point::coords).collect();
        serde_json::to_string(&view).expect("serializing finite floats cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self, ConfigError> {
        let raw: Vec<Vec<f64>> = serde_json::from_str(s)?;
        let points = raw.into_iter().map(Point::new).collect::<Result<Vec<_>, _>>()?;
        Configuration::new(points)
    }
}

/// Atoms of `a` not in `b` and atoms of `b` not in `a`, with multiplicity.
pub fn symmetric_difference(a: &Configuration, b: &Configuration) -> (Configuration, Configuration) {
    let mut only_a = Vec::new();
    let mut only_b = Vec::new();
    let (pa, pb) = (a.points(), b.points());
    let (mut i, mut j) = (0, 0);
    while i < pa.len() && j < pb.len() {
        match pa[i].cmp(&pb[j]) {
            Ordering::Less => {
                only_a.push(pa[i].clone());
                i += 1;
            }
            Ordering::Greater => {
                only_b.push(pb[j].clone());
                j += 1;
            }
            Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    only_a.extend_from_slice(&pa[i..]);
    only_b.extend_from_slice(&pb[j..]);
    (Configuration { points: only_a }, Configuration { points: only_b })
}

/// The printed total-variation distance
/// `d1(a, b) = 2 · sup_A |a(A) - b(A)| = 2 · max(|a \ b|, |b \ a|)`.
pub fn d1_distance(a: &Configuration, b: &Configuration) -> f64 {
    let (only_a, only_b) = symmetric_difference(a, b);
    2.0 * only_a.len().max(only_b.len()) as f64
}

/// Matching distance: square root of the minimum-cost perfect matching under
/// `d0(x, y) = min(‖x - y‖, truncation)`; `+∞` when cardinalities differ.
pub fn d2_distance(a: &Configuration, b: &Configuration, truncation: f64) -> f64 {
    assert!(truncation > 0.0, "truncation must be positive");
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    if a.is_empty() {
        return 0.0;
    }
    let n = a.len();
    let cost: Vec<f64> = a
        .points()
        .iter()
        .flat_map(|p| b.points().iter().map(move |q| p.euclid(q).min(truncation)))
        .collect();
    let (_, total) = crate::transport::assignment::min_cost_assignment(n, n, &cost)
        .expect("finite costs by construction");
    total.sqrt()
}

/// Which ground metric to put on configuration space, with its constants
/// explicit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroundMetric {
    /// `scale · sup_A |a(A) - b(A)|`. The printed definition has
    /// `scale = 2`; `scale = 1` is the unit-increment normalization under
    /// which one added atom moves a configuration by exactly 1.
    D1 { scale: f64 },
    /// Matching distance with ground-cost truncation `c` (default 1).
    D2 { truncation: f64 },
}

impl GroundMetric {
    /// The printed `d1` (factor 2).
    pub fn d1() -> Self {
        GroundMetric::D1 { scale: 2.0 }
    }

    /// `d1` normalized so that adding one atom moves a configuration by 1 —
    /// the convention under which the Lipschitz/bound machinery is tight.
    pub fn d1_unit() -> Self {
        GroundMetric::D1 { scale: 1.0 }
    }

    pub fn d2(truncation: f64) -> Self {
        GroundMetric::D2 { truncation }
    }

    /// Default truncation for `d2`.
    pub fn d2_default() -> Self {
        GroundMetric::D2 { truncation: 1.0 }
    }

    pub fn distance(&self, a: &Configuration, b: &Configuration) -> f64 {
        match *self {
            GroundMetric::D1 { scale } => scale / 2.0 * d1_distance(a, b),
            GroundMetric::D2 { truncation } => d2_distance(a, b, truncation),
        }
    }
}
