//! Discrete atomistic energies of deformed Bravais crystals with finite-range
//! pair potentials, their lattice-cell averages, and the bulk, surface and
//! interfacial energy densities that appear in their small-scale expansions.
//!
//! The crate is organised bottom-up:
//!
//! * [`lattice`]: bases, duals, Miller vectors, point enumeration and counting.
//! * [`geometry`]: convex polytopes (clipping, volumes, cross-sections, splits).
//! * [`material`]: pair potentials, deformations, the Cauchy–Born density.
//! * [`energy`]: discrete and cell-averaged energies, surface and interface densities.
//! * [`asymptotics`]: ε-schedules, expansion fits and convergence studies.
//! * [`oracle`]: brute-force translation averages and dense path integrals.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod energy;
mod error;
pub mod geometry;
pub mod lattice;
pub mod material;
pub mod numerics;
pub mod oracle;

pub use error::{Error, Result};

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;
