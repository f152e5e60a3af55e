//! Spherically symmetric equilibria of self-gravitating matter under MOND
//! (QUMOND) gravity.
//!
//! The crate covers the whole pipeline: interpolation functions and their
//! energy kernel, radial fields and potentials, the variational functionals
//! whose minimizers are the equilibria, a shooting solver for the
//! Euler–Lagrange equation with mass-curve scans, the lift of fluid
//! equilibria to isotropic distribution functions, and a shell code that
//! perturbs and evolves those equilibria.

// `!(a <= b)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dynamics;
pub mod equilibrium;
pub mod error;
pub mod functionals;
pub mod interpolation;
pub mod quad;
pub mod radial_field;
pub mod verify;

pub use error::{Error, Result};
pub use interpolation::{Family, InterpolationFunction, QKernel};
pub use radial_field::{FieldProfile, PotentialNormalization, RadialDensity};
