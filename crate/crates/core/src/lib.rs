//! Optimal transport between a continuous reference measure and stationary
//! point processes on `R^d` under translation-invariant cost.
//!
//! The crate is organised around an exact, quantized transport solver: all
//! masses are integer multiples of a quantum `1/K` and all costs are scaled
//! to 64-bit fixed point, so optimality, marginal and monotonicity audits
//! are integer comparisons rather than floating-point guesses.
//!
//! Modules:
//! - [`domain`]: the lattice group `Z^d` acting on `R^d`, cube windows and
//!   translation-invariant cost evaluation.
//! - [`randmeas`]: deterministic seeded samplers for Poisson, binomial and
//!   compound-Poisson processes, quantized Lebesgue discretization, and the
//!   compound-Poisson concentration bound.
//! - [`solver`]: exact min-cost-flow couplings and semicouplings, a
//!   brute-force oracle, cyclical-monotonicity and efficiency audits, and a
//!   semidiscrete dual solver for quadratic cost.
//! - [`allocation`]: allocation cells extracted from plans, geometric audits
//!   (convexity, starlikeness, Voronoi reference) and SVG rendering.
//! - [`construct`]: per-window optimal semicouplings, the averaged (mixed)
//!   plan, mean-cost-per-volume curves, density profiles and transport-map
//!   drift diagnostics.
//! - [`metrics`]: window-level Wasserstein estimates, metric-axiom audits, a
//!   jitter stability probe and the moving-mosaic experiment.

pub mod allocation;
pub mod construct;
pub mod domain;
pub mod metrics;
pub mod randmeas;
pub mod solver;

pub use domain::{CostSpec, Geometry, LatticePoint, Point, Window};
pub use randmeas::{DiscreteDensity, PointConfiguration, SceneSpec};

