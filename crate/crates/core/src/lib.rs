//! Quantized piecewise-linear expanding interval maps: exact classical
//! dynamics, unitary quantizations, observable calculus, entropy/pressure
//! diagnostics, tower constructions, and closed-form eigenstate families.

extern crate blas_src;

pub mod cylinder;
pub mod entropy;
pub mod error;
pub mod families;
pub mod linalg;
pub mod map;
pub mod observable;
pub mod quantize;
pub mod site;
pub mod tensorial;
pub mod tower;
pub mod transfer;

pub use error::{Error, Result};
