//! Experiment harness for `modelopt`: θ-grid sweeps written as CSV plus a JSON
//! manifest, SVG figures of iterations-to-converge against θ, and the
//! convex-mode rate suite.

pub mod config;
pub mod convex;
pub mod error;
pub mod method;
pub mod plot;
pub mod sweep;

pub use config::{ConvexConfig, ProblemSpec, SweepConfig};
pub use error::BenchError;
pub use method::Method;
pub use sweep::{SweepRow, CSV_HEADER};
