//! Weakly supervised lifting of 2D human pose landmarks to 3D skeletons.
//!
//! A generator predicts a depth offset for each 2D joint, the joints are
//! back-projected to a 3D skeleton, the skeleton is re-imaged from a random
//! viewpoint, and a discriminator judges whether that 2D view looks like a
//! real pose. Training needs only 2D poses.

// `!(x >= lo)` is how NaN gets rejected along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod eval;
pub mod gan;
pub mod geometry;
pub mod gradcheck;
pub mod nn;
pub mod rng;
pub mod run;

pub use error::{Error, Result};
