//! Jump Markov process of `L`, diffusive rescaling and invariance-principle statistics.

pub mod ensemble;
pub mod path;
pub mod sampler;
pub mod stats;

use serde::{Deserialize, Serialize};

pub use ensemble::{direct_eps_ensemble, expected_events, path_rng, rescaled_ensemble, TrajectoryBatch};
pub use path::{sample_jump, simulate_path, JumpProcess, Trajectory};
pub use sampler::KernelSampler;
pub use stats::{
    chi_square, ensemble_stats, excess_kurtosis, invariance_stats, kolmogorov_sf, ks_normal, ks_two_sample,
    kurtosis_trend, EnsembleStats, BAND,
};

use crate::model::{Coefficient, KernelSpec};

/// Default cap on expected candidate events per ensemble.
pub const DEFAULT_MAX_EVENTS: f64 = 2e10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessConfig {
    pub kernel: KernelSpec,
    pub lambda: Coefficient,
    pub mu: Coefficient,
    pub seed: u64,
    pub max_events: f64,
    pub keep_paths: bool,
}

impl ProcessConfig {
    pub fn new(kernel: KernelSpec, lambda: Coefficient, mu: Coefficient) -> Self {
        Self { kernel, lambda, mu, seed: 0, max_events: DEFAULT_MAX_EVENTS, keep_paths: false }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}
