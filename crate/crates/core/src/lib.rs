//! Data-driven bilinear Koopman lifts of control-affine systems.
//!
//! The crate fits a lifted model `z⁺ = A z + u B z` from snapshot data,
//! checks the accessibility rank of the lift, and synthesizes a quadratic
//! control Lyapunov function with a linear feedback by determinant
//! maximization under a linear matrix inequality. It needs only `alloc`;
//! file formats and the command-line tool live in the `koopctl` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod controllability;
pub mod dictionary;
pub mod edmd;
pub mod error;
pub mod linalg;
pub mod synthesis;
pub mod systems;

pub use dictionary::{Dictionary, MultiIndex};
pub use edmd::{KoopmanApproximation, LiftedBilinearModel, SnapshotData};
pub use error::{Error, Result};
pub use nalgebra::{DMatrix, DVector};
