//! Axisymmetric eddy-current forward modelling and Linear Sampling Method
//! imaging of deposits on the outer wall of a tube.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod forward;
pub mod green;
pub mod io;
pub mod lsm;
pub mod materials;
pub mod mesh;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};
