//! Robust minimization over 1-Wasserstein balls.
//!
//! The problem solved here is
//!
//! ```text
//! inf { ∫ V dν : W₁(ν, μ) ≤ θ }
//! ```
//!
//! for a bounded Lipschitz payoff `V`, a finitely supported center measure `μ`
//! and a robustness radius `θ`. The infinite-dimensional problem is replaced by
//! a sequence of finite ones: measures are projected onto dyadic partitions of a
//! bounding box, and the resulting instances are solved exactly as linear
//! programs. Two independent solution routes (a coupling LP and a λc-transform
//! dual) plus a closed-form 1-d transport oracle keep the numerics honest.
//!
//! Modules:
//! - [`measures`]: discrete probability measures, payoff registry, text I/O
//! - [`transport`]: exact W₁ distances, optimal plans, dual potentials
//! - [`filtration`]: dyadic partitions of a box and measure projection
//! - [`dro`]: the robust minimization LP and its λc-transform dual
//! - [`convergence`]: filtration-level studies and radius perturbation scans

pub mod convergence;
pub mod dro;
pub mod filtration;
pub mod measures;
pub mod text;
pub mod transport;
