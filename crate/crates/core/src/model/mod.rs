//! Periodic medium description: torus grids, coefficients, kernels and their lattice folds.

pub mod coefficient;
pub mod conv;
pub mod fold;
pub mod grid;
pub mod kernel;

pub use coefficient::{validate_coefficients, Coefficient, FourierTerm};
pub use conv::{PreparedKernel, TorusFft};
pub use fold::{
    choose_k_max, fold_kernel, fold_moment_kernel, fold_second_moment, mass_function, FoldedKernel,
    DEFAULT_TAIL_TOL, K_MAX_CAP,
};
pub use grid::{FieldRole, PeriodicField, TorusGrid};
pub use kernel::{kernel_moments, KernelFamily, KernelMoments, KernelSpec};
