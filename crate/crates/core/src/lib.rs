//! Numerical laboratory for isolated boundary singularities of the equation
//! `-div(|Du|^(N-2) Du) + |u|^(q-1) u = 0` near a boundary point of a domain
//! in R^N, in the range `q > N-1`.
//!
//! The crate computes the closed-form exponents that govern the singular
//! behaviour, solves the spherical profile equation on the upper hemisphere
//! by shooting, solves the axisymmetric PDE on truncated half-space sectors,
//! evaluates the exact sub/supersolutions used to sandwich solutions,
//! verifies the inversion / reflection machinery that transplants half-space
//! constructions to curved boundaries, and classifies discrete fields into
//! the removable / weak / strong trichotomy.

pub mod analytic;
pub mod classify;
pub mod exponents;
pub mod fd;
pub mod halfspace;
pub mod sphere_ode;
pub mod transforms;

pub mod acceptance;
pub mod util;

pub use exponents::{ExponentTable, ProblemParams, Strength};
