//! Structure-preserving integration of Hamiltonian problems with
//! Hamiltonian Boundary Value Methods (HBVMs).
//!
//! The toolkit follows the continuous-stage view of the method family: a
//! step is a degree-s polynomial whose Legendre coefficients solve a small
//! fixed-point system, and the discrete HBVM(k,s) tableau arises by reading
//! the coefficient integrals through a k-point Gauss-Legendre rule.
//!
//! Modules:
//! - [`legendre`]: orthonormal shifted Legendre basis, primitives, the ξ
//!   band matrices, and the continuous coefficient functions.
//! - [`quadrature`]: Gauss-Legendre rules on [0, 1].
//! - [`tableau`]: discrete HBVM(k,s) Runge-Kutta and Runge-Kutta-Nystrom
//!   tableaus, the low-rank symplectic variant, and (de)serialization.
//! - [`integrator`]: implicit one-step maps, dense output, trajectories.
//! - [`problems`]: built-in Hamiltonian benchmark problems.
//!
//! # Example
//!
//! HBVM(4,2) on the quartic oscillator conserves the energy to round-off
//! because the 4-point rule integrates the degree-7 energy integrand
//! exactly:
//!
//! ```
//! use hbvm::integrator::{integrate, SolverConfig};
//! use hbvm::problems::{energy_series, make_poly_oscillator};
//!
//! let problem = make_poly_oscillator(4).unwrap();
//! let cfg = SolverConfig::new(0.1, 200).unwrap();
//! let trajectory = integrate(&problem.as_first_order(), 4, 2, &cfg).unwrap();
//! let drift = energy_series(&problem, &trajectory)
//!     .unwrap()
//!     .iter()
//!     .map(|row| row.drift.abs())
//!     .fold(0.0f64, f64::max);
//! assert!(drift < 1e-12);
//! ```

// index-style loops mirror the matrix formulas throughout
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod integrator;
pub mod legendre;
pub mod problems;
pub mod quadrature;
pub mod tableau;

pub use error::{Error, Result};
