//! Periodic homogenization of nonlocal convolution-type operators with
//! variable coefficients.

pub mod cell;
pub mod cli;
pub mod error;
pub mod homog;
pub mod model;
pub mod process;
pub mod verdict;

pub use error::{Error, Result};
