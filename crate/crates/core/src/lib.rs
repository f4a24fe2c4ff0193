//! Simulation and optimal-control toolkit for pulsed laser cooling of
//! cavity-optomechanical resonators.
//!
//! Units: `hbar = 1` and the mechanical frequency `nu` sets the rate scale;
//! times are in units of `1/nu`. Quadratures follow `x = (a + a†)/√2`,
//! `p = i(a† − a)/√2`, so that `[x, p] = i` and the vacuum covariance is the
//! identity. Two-mode phase-space vectors are ordered `(x_c, p_c, x_m, p_m)`.
//!
//! Layout:
//! - [`params`]: physical parameters and feasibility calculators.
//! - [`drive`]: laser drive histories, the linearized coupling `G(t)` and
//!   the classical cavity field.
//! - [`quadratic`]: quadratic Hamiltonians `½RᵀVR + cᵀR` and their Lie algebra.
//! - [`covariance`]: Gaussian first and second moments under the linearized
//!   dynamics with cavity decay.
//! - [`symplectic`]: exact affine phase-space propagators, BCH effective
//!   Hamiltonians and Bogoliubov transformations.
//! - [`bch`]: analytical pulse schedule compiler.
//! - [`fock`]: truncated Fock-space simulator (pure states and Lindblad).
//! - [`optimize`]: hybrid quasi-Newton / simulated-annealing pulse optimizer.
//! - [`scenario`] and [`harness`]: scenario files, run directories and the
//!   figure reproductions driven by the command-line tool.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bch;
pub mod covariance;
pub mod drive;
pub mod error;
pub mod fock;
pub mod harness;
pub mod optimize;
pub mod params;
pub mod quadratic;
pub mod scenario;
pub mod symplectic;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// One mechanical period, `2π/ν` with `ν = 1`.
pub const PERIOD: f64 = 2.0 * std::f64::consts::PI;
