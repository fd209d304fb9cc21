//! Ensembles of diffusively rescaled paths `X_ε(t) = εX(t/ε²)`.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::path::{JumpProcess, Trajectory};
use super::ProcessConfig;
use crate::error::{Error, Result};

/// Generator for path `id`: the master seed picks the key, the path index the stream.
pub fn path_rng(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryBatch {
    pub dim: usize,
    pub eps: f64,
    pub seed: u64,
    /// Evaluation times of `X_ε`.
    pub times: Vec<f64>,
    /// `positions[k][path·d + i]` is component `i` of `X_ε(times[k])`.
    pub positions: Vec<Vec<f64>>,
    /// Jumps of the unscaled path up to `times.last()/ε²`.
    pub jumps: Vec<u64>,
    /// Full rescaled paths when requested.
    pub paths: Option<Vec<Trajectory>>,
}

impl TrajectoryBatch {
    pub fn len(&self) -> usize {
        self.jumps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jumps.is_empty()
    }

    /// Samples of component `i` at time index `k`.
    pub fn component(&self, k: usize, i: usize) -> Vec<f64> {
        self.positions[k].iter().skip(i).step_by(self.dim).copied().collect()
    }

    pub fn mean_jumps(&self) -> f64 {
        self.jumps.iter().map(|&j| j as f64).sum::<f64>() / self.len().max(1) as f64
    }

    /// `path_id,t,x1[,x2]` for every jump of every stored path.
    pub fn paths_csv(&self) -> Option<String> {
        let paths = self.paths.as_ref()?;
        let mut out = String::from(if self.dim == 1 { "path_id,t,x1\n" } else { "path_id,t,x1,x2\n" });
        for (id, p) in paths.iter().enumerate() {
            for (t, x) in p.times.iter().zip(&p.positions) {
                let _ = write!(out, "{id},{t:.16e}");
                for v in &x[..self.dim] {
                    let _ = write!(out, ",{v:.16e}");
                }
                out.push('\n');
            }
        }
        Some(out)
    }
}

/// Expected candidate events for the whole ensemble.
pub fn expected_events(process: &JumpProcess, eps: f64, horizon: f64, n: usize) -> f64 {
    process.envelope_rate() * horizon / (eps * eps) * n as f64
}

/// `N` independent copies of `X_ε` from the origin, observed at sorted `times`.
///
/// The unscaled path runs to `T/ε²` and is scaled by `ε`. Path `i` draws from
/// [`path_rng`]`(cfg.seed, i)`; results are collected by path index.
pub fn rescaled_ensemble(eps: f64, times: &[f64], n: usize, cfg: &ProcessConfig) -> Result<TrajectoryBatch> {
    if n == 0 {
        return Err(Error::Config("ensemble size must be positive".into()));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Config(format!("eps must be positive, got {eps}")));
    }
    if times.is_empty() || times.iter().any(|t| !(*t >= 0.0)) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("evaluation times must be nonnegative and strictly increasing".into()));
    }
    let process = JumpProcess::new(cfg)?;
    let horizon = *times.last().unwrap();
    let expected = expected_events(&process, eps, horizon, n);
    if expected > cfg.max_events {
        return Err(Error::Budget { expected, cap: cfg.max_events });
    }
    let d = process.dim;
    let inv = 1.0 / (eps * eps);
    let base_times: Vec<f64> = times.iter().map(|t| t * inv).collect();
    let results: Vec<(Vec<[f64; 2]>, u64, Option<Trajectory>)> = (0..n)
        .into_par_iter()
        .map(|id| {
            let mut rng = path_rng(cfg.seed, id as u64);
            if cfg.keep_paths {
                let tr = process.simulate_path([0.0, 0.0], horizon * inv, &mut rng);
                let snap = base_times.iter().map(|t| tr.position_at(*t)).collect();
                let jumps = tr.jumps() as u64;
                (snap, jumps, Some(tr.rescaled(eps)))
            } else {
                let (snap, jumps) = process.snapshots([0.0, 0.0], &base_times, &mut rng);
                (snap, jumps, None)
            }
        })
        .collect();
    let mut positions = vec![Vec::with_capacity(n * d); times.len()];
    let mut jumps = Vec::with_capacity(n);
    let mut paths = cfg.keep_paths.then(|| Vec::with_capacity(n));
    for (snap, j, tr) in results {
        for (k, x) in snap.iter().enumerate() {
            positions[k].extend(x[..d].iter().map(|v| eps * v));
        }
        jumps.push(j);
        if let (Some(ps), Some(tr)) = (paths.as_mut(), tr) {
            ps.push(tr);
        }
    }
    Ok(TrajectoryBatch { dim: d, eps, seed: cfg.seed, times: times.to_vec(), positions, jumps, paths })
}

/// Values at `t` of `N` paths simulated directly from `L^ε`, for comparison with the rescaled ensemble.
pub fn direct_eps_ensemble(eps: f64, t: f64, n: usize, cfg: &ProcessConfig) -> Result<Vec<[f64; 2]>> {
    let process = JumpProcess::new(cfg)?;
    let expected = expected_events(&process, eps, t, n);
    if expected > cfg.max_events {
        return Err(Error::Budget { expected, cap: cfg.max_events });
    }
    Ok((0..n)
        .into_par_iter()
        .map(|id| {
            let mut rng = path_rng(cfg.seed, id as u64);
            let mut x = [0.0, 0.0];
            process.run([0.0, 0.0], eps, t, &mut rng, |_, y| x = y);
            x
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Coefficient, KernelSpec};

    fn cfg() -> ProcessConfig {
        ProcessConfig::new(KernelSpec::gaussian(1, 0.3).unwrap(), Coefficient::constant(1.0), Coefficient::sinusoid(1.0, 0.5))
    }

    #[test]
    fn starts_at_origin_and_rejects_bad_input() {
        let b = rescaled_ensemble(0.5, &[0.0, 1.0], 50, &cfg()).unwrap();
        assert!(b.positions[0].iter().all(|v| *v == 0.0));
        assert!(rescaled_ensemble(0.5, &[1.0], 0, &cfg()).is_err());
        assert!(rescaled_ensemble(0.5, &[1.0, 0.5], 5, &cfg()).is_err());
    }

    #[test]
    fn budget_is_enforced() {
        let c = ProcessConfig { max_events: 1e4, ..cfg() };
        match rescaled_ensemble(0.01, &[1.0], 100, &c) {
            Err(Error::Budget { expected, cap }) => {
                assert!((expected - 1.5e6).abs() < 1e-6 && cap == 1e4);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn kept_paths_agree_with_snapshots() {
        let c = ProcessConfig { keep_paths: true, ..cfg() };
        let a = rescaled_ensemble(0.5, &[0.5, 1.0], 20, &c).unwrap();
        let b = rescaled_ensemble(0.5, &[0.5, 1.0], 20, &cfg()).unwrap();
        assert_eq!(a.positions, b.positions);
        assert_eq!(a.jumps, b.jumps);
        let paths = a.paths.as_ref().unwrap();
        assert_eq!(paths[3].position_at(1.0)[0], a.positions[1][3]);
        let csv = a.paths_csv().unwrap();
        let rows = csv.lines().count() - 1;
        assert_eq!(rows, paths.iter().map(|p| p.times.len()).sum::<usize>());
    }

    #[test]
    fn path_results_do_not_depend_on_ensemble_size() {
        let small = rescaled_ensemble(0.3, &[1.0], 10, &cfg()).unwrap();
        let large = rescaled_ensemble(0.3, &[1.0], 40, &cfg()).unwrap();
        assert_eq!(small.positions[0][..], large.positions[0][..10]);
    }
}
