//! Numerical machinery for the stability theory of minimal submanifolds in
//! spheres carrying a conformal metric `g̃ = e^{2f} g`.
//!
//! The round sphere `S^n` is represented extrinsically inside `ℝ^{n+1}`. The
//! crate is `no_std` (it needs `alloc`); IO, configuration and parallel
//! execution live in the `stabsphere` companion crate.
//!
//! Module map:
//! - [`ambient`]: round-sphere geometry and the conformal transformation laws.
//! - [`immersion`]: charted submanifolds, adapted frames, second fundamental form.
//! - [`stability`]: the pointwise and integrated second-variation forms and
//!   their traces over (rescaled) constant vector fields.
//! - [`pinching`]: sampled estimates of sectional-curvature pinching.
//! - [`oracle`]: finite-difference cross-checks and the inequality chain of the
//!   nonexistence theorem.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod ambient;
pub mod error;
pub mod exec;
pub mod immersion;
pub mod linalg;
pub mod oracle;
pub mod pinching;
pub mod quadrature;
pub mod stability;

pub use error::{Error, Result};
pub use exec::{Executor, Sequential};

/// Assertion tolerance for pipelines built from analytic derivatives.
pub const ANALYTIC_TOL: f64 = 1e-8;

/// Assertion tolerance for pipelines that contain a finite-difference step.
pub const FINITE_DIFFERENCE_TOL: f64 = 1e-4;
