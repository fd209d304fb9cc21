//! Convergence of the rescaled operators to the effective diffusion on a truncated box.

pub mod evolve;
pub mod grid;
pub mod operator;
pub mod spectral;
pub mod study;

pub use evolve::{solve_resolvent_eps, SemigroupStepper, RESOLVENT_REL_TOL};
pub use grid::SampleGrid;
pub use operator::{assemble_Leps, DiscreteNonlocalOperator};
pub use spectral::{limit_residual, solve_limit_resolvent, BoxSpectral, LimitField};
pub use study::{
    corrector_expansion, main_lemma_residual, resolvent_convergence_study, semigroup_study, Source, StudyProblem,
    StudyResult,
};
