//! Stochastic model-based optimization for weakly convex objectives whose
//! Lipschitz constant grows with the iterate.
//!
//! The crate is organized bottom-up:
//!
//! - [`model`]: per-sample losses, the subgradient / prox-linear / truncated
//!   models and their closed-form regularized subproblems.
//! - [`stepsize`]: constant, growth-adaptive and reference-Lipschitz (clipped)
//!   regularization policies.
//! - [`problems`]: synthetic robust regression instances.
//! - [`solver`]: the stochastic model-based iteration with stopping and
//!   divergence detection.
//! - [`envelope`]: Moreau-envelope stationarity diagnostics.
//! - [`mirror`]: mirror-descent baseline with radial polynomial kernels.
//! - [`par`]: data-parallel helpers (rayon behind the `parallel` feature).

pub mod envelope;
pub mod error;
pub mod linalg;
pub mod mirror;
pub mod model;
pub mod par;
pub mod problems;
pub mod rng;
pub mod solver;
pub mod stepsize;

pub use error::{Error, Result};
pub use model::{ModelEval, ModelKind, ModelTag, RegularizerSpec, Sample};
pub use problems::{ProblemInstance, ProblemKind};
pub use solver::{ReferenceSample, RunRecord, SolverConfig};
pub use stepsize::{PolicyKind, StepsizeMode, StepsizeParams};
