use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("kernel moment quadrature did not converge (last change {last_change:.3e})")]
    MomentDivergence { last_change: f64 },

    #[error(
        "lattice truncation cannot reach tail tolerance {tail_tol:.1e}: remainder {achieved:.3e} at K_max = {k_max}"
    )]
    Truncation { achieved: f64, tail_tol: f64, k_max: usize },

    #[error("coefficient {name} is not bounded away from zero: value {value:.3e} at node {node}")]
    CoefficientBounds { name: String, node: usize, value: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("box truncation error: {0}")]
    BoxTruncation(String),

    #[error("solver breakdown: {0}")]
    SolverBreakdown(String),

    #[error("deflated iteration did not contract after {iterations} iterations (estimated spectral radius {rho:.6})")]
    NonContraction { iterations: usize, rho: f64 },

    #[error("second-order cell problem is unsolvable for the supplied Theta: residual {residual:.3e} > {tolerance:.3e}")]
    InconsistentTheta { residual: f64, tolerance: f64 },

    #[error("integrator error: {0}")]
    Integrator(String),

    #[error("jump budget exceeded: expected {expected:.3e} jumps, cap {cap:.3e}")]
    Budget { expected: f64, cap: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
