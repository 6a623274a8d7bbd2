//! Numerical machinery for bounding the Rubinstein (Kantorovich–Wasserstein-1)
//! distance between laws of finite point processes.
//!
//! The crate has three layers:
//!
//! * **Sampling** ([`simulate`], [`config`]): finite configurations as sorted
//!   atom multisets, homogeneous/inhomogeneous Poisson samplers, CTMC paths and
//!   Markov-modulated Poisson processes, and the coupled (superposition /
//!   thinning) samplers that make empirical transport estimates meaningful.
//! * **Discrete Malliavin calculus** ([`malliavin`]): the add-one-point
//!   gradient, the Ornstein–Uhlenbeck semigroup realized by thinning plus an
//!   independent refresh, its resolvent via exponential time randomization, and
//!   an exact finite-carrier engine (product birth–death generator on
//!   `{0..K}^m`) where every identity can be checked against linear algebra.
//! * **Bounds and transport** ([`bounds`], [`transport`]): closed-form and
//!   Monte Carlo distance bounds (Poisson vs Poisson via Girsanov densities,
//!   Poisson vs MMPP via path integrals), and exact/empirical optimal
//!   transport (Hungarian assignment, network simplex) to check them against.
//!
//! Everything randomized takes an explicit RNG; [`rng::substream`] gives
//! reproducible, splittable streams so parallel runs are bitwise stable.

pub mod bounds;
pub mod config;
pub mod linalg;
pub mod malliavin;
pub mod numeric;
pub mod rng;
pub mod simulate;
pub mod transport;

pub use bounds::{BoundReport, BoundVariant, OptimizeReport};
pub use config::{Configuration, GroundMetric, Point, Window};
pub use simulate::{CtmcModel, CtmcPath, IntensityFunction, StartState};
