//! Numerical laboratory for Camassa–Holm solitons.
//!
//! The crate builds smooth soliton profiles, evolves the equation
//! pseudo-spectrally, computes scattering data of the Lax problem,
//! discretizes the linearized and recursion operators, tracks modulated
//! solitons and runs the gKdV/mKdV toolkit. The `chlab` binary wraps the
//! experiments behind a small CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod gkdv;
pub mod harness;
pub mod linops;
pub mod modulation;
pub mod multisoliton;
pub mod perturb;
pub mod scattering;
pub mod soliton;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
pub use spectral::{Field, Grid, WeightParam};
