//! Coupled hypercube percolation and the objects needed to compare it with its
//! scaling limit: non-backtracking walk kernels, Brownian and Erdős–Rényi
//! reference samplers, window calibration, multiplicative and sprinkled
//! component graphs, and finite metric measure spaces.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod component_graphs;
pub mod dsu;
pub mod error;
pub mod rng;
pub mod limit_oracle;
pub mod mmspace;
pub mod multiplicative;
pub mod percolation;
pub mod stats;
pub mod substrate;

pub use error::{Error, Result};
