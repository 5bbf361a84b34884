// Copyright 2026 The coscat Authors
// SPDX-License-Identifier: Apache-2.0

//! Simulation and analysis of motional entanglement between levitated
//! nanoparticles that share one cavity mode through coherent scattering.
//!
//! The crate is organised bottom-up:
//!
//! * [`params`] turns laboratory inputs into trap frequencies, couplings and
//!   sideband rates.
//! * [`fock`] builds truncated Fock-space operators and states. The mode order
//!   is always `(cavity, mechanical 1, …, mechanical N)`.
//! * [`lindblad`] integrates the full cavity + mechanics master equation.
//! * [`reduced`] holds the weak-coupling closed forms: moment evolution,
//!   the Stokes conditioning operator, the anti-Stokes flux and its
//!   separability bound.
//! * [`protocol`] runs the complete blue-click-red experiment with either
//!   engine.

pub mod error;
pub mod fock;
pub mod lindblad;
pub mod params;
pub mod protocol;
pub mod reduced;

pub use error::{Error, Result};
pub use num_complex::Complex64;
