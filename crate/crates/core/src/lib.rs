//! Semiclassical radiation from single-particle quantum currents.
//!
//! Probability densities and currents of Schrödinger, Klein-Gordon and Dirac
//! states (plus a free-streaming Newtonian ensemble) are used as classical
//! sources for the Maxwell field. The far field is assembled from the moment
//! integrals
//!
//! ```text
//! I_m(t0) = ∫ J(x', t0) (n̂·x')^(m-1) d³x'
//! B = -n̂ × 1/(c² R0) Σ_m ∂^m I_m / ∂t0^m (1/c)^(m-1) / (m-1)!
//! ```
//!
//! and checked independently against a brute-force retarded-potential
//! evaluator ([`oracle`]).
//!
//! Working units are ħ = c = 1 unless a state overrides them.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod ensemble;
pub mod error;
pub mod gridlab;
pub mod multipole;
pub mod oracle;
pub mod relativistic;
pub mod scenario;
pub mod schrodinger;
pub mod source;

pub use error::{Error, Result};
pub use gridlab::{FieldGrid, TimeSampling, UniformGrid3, Vec3};
pub use source::CurrentSource;
