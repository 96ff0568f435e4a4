//! Discrete-velocity solver and verification suite for the stationary
//! ellipsoidal-BGK equation on the slab [0, 1] with inflow boundary data.

// Index loops mirror the matrix notation, and negated comparisons reject NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod boundary;
pub mod cli;
pub mod error;
pub mod gaussian;
pub mod linalg;
pub mod moments;
pub mod solver;
pub mod verify;
pub mod vgrid;

pub use error::{Error, Result};
