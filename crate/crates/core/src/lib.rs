//! Numerical core for a superconducting coaxial quarter-wave cavity with a
//! levitated spherical magnet.
//!
//! The crate is `no_std` (with `alloc`) so the physics can be embedded
//! anywhere; file formats, configuration and the command line live in the
//! `stubcav` crate. All quantities are SI internally.
//!
//! Layout:
//!
//! * [`units`] – physical constants, dBm conversion, validated geometry and
//!   material records.
//! * [`superconductor`] – two-fluid pair fraction, penetration depth, surface
//!   impedance, kinetic inductance and the lumped LC resonance.
//! * [`mode`] – axisymmetric finite-difference eigensolver for the bare
//!   cavity mode, field evaluation, stored energy and geometry factor.
//! * [`perturbation`] – small-sphere frequency shifts, shift maps and the
//!   frequency to height inversion.
//! * [`resonance`] – quality factors, S21 synthesis and resonance fitting,
//!   and the self-consistent operating point of the driven cavity.
//! * [`experiment`] – stateful replay of temperature sweeps, power ramps and
//!   power switching with heating, quench and trapped flux.

#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

mod error;
pub mod experiment;
pub mod mode;
pub mod perturbation;
pub mod resonance;
pub mod superconductor;
pub mod units;

pub use error::{Error, GeometryViolation, Result};
pub use units::{CavityGeometry, MagnetSpec, MaterialParams, PhysicalConstants};
