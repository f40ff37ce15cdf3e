//! Energy-based modeling and control of weakly coupled electromechanical
//! systems in the port-Hamiltonian framework.
//!
//! The crate provides:
//!
//! * dense small-matrix kernels (definiteness, Hurwitz and imaginary-axis
//!   eigenvalue tests, Lyapunov/Riccati solves) in [`matrix`], [`eigen`] and
//!   [`analysis`];
//! * the open-loop plant model `(q, p, x_e)` with Hamiltonian
//!   `H = p'M⁻¹(q)p/2 + V(q) + x_e'Ψ(q)x_e/2` in [`plant`];
//! * desired equilibria and feasible reference trajectories in [`target`];
//! * the four static energy-shaping feedback laws (two regulation, two
//!   exponential-tracking) with their side-condition verification in
//!   [`shaping`], [`controller`] and [`verify`];
//! * contraction certificates, constant-metric searches and the
//!   coupled-damping convergence-rate study in [`contraction`];
//! * closed-loop time integration (explicit adaptive Runge-Kutta and an
//!   A-stable implicit one-step scheme) and performance metrics in [`sim`]
//!   and [`metrics`].
//!
//! The crate is `no_std`-compatible (with `alloc`); enable the `libm`
//! feature instead of `std` on targets without a standard library.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

#[cfg(feature = "std")]
extern crate std;

pub mod analysis;
pub mod contraction;
pub mod controller;
pub mod eigen;
pub mod error;
pub mod matrix;
pub mod metrics;
pub mod plant;
pub mod shaping;
pub mod sim;
pub mod target;
pub mod verify;

pub use error::{Error, Result};
pub use matrix::Matrix;
