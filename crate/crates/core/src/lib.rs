//! Net-moment estimation for planar magnetizations from a single field
//! component measured along a line.
//!
//! A magnetization `m = (m₁, m₂)` supported on `S = (-s, s)` produces, at
//! height `h` above the sample, a vertical field `b₂[m]` that is sampled on
//! `K = (-q, q)`. The net moments `⟨mᵢ⟩ = ∫_S mᵢ` are estimated as linear
//! functionals `⟨b₂[m], φᵢ⟩` whose test functions `φᵢ` solve norm-constrained
//! best-approximation problems: make `b₂*[φᵢ]` close to the indicator
//! `eᵢ` of `S` under a budget on `‖φᵢ‖` in `L²(K)` or in `W₀^{1,2}(K)`.
//!
//! Modules, bottom-up:
//! - [`kernels`]: Poisson/conjugate kernels and Hilbert transforms.
//! - [`spectral`]: Fourier basis on `K`, Gram matrix, right-hand sides.
//! - [`operators`]: forward operator, adjoint, magnetization types.
//! - [`bep`]: regularized critical-point solves and the `λ ↔ M` map.
//! - [`experiments`]: builtin magnetizations, moment reports, noise.
//! - [`cli`]: the `netmoment` command-line front end.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bep;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod fourier;
pub mod geometry;
pub mod kernels;
pub mod operators;
pub mod quadrature;
pub mod spectral;

pub use error::{Error, Result};
pub use geometry::{Geometry, Interval, VerticalAxis};
