//! Single-path simulation of the jump process with generator `L`.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use super::sampler::KernelSampler;
use super::ProcessConfig;
use crate::error::Result;
use crate::model::Coefficient;

/// Càdlàg step path: `positions[k]` holds on `[times[k], times[k+1])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dim: usize,
    pub times: Vec<f64>,
    pub positions: Vec<[f64; 2]>,
    pub horizon: f64,
}

impl Trajectory {
    pub fn jumps(&self) -> usize {
        self.times.len() - 1
    }

    /// Value at the last jump time `≤ t`.
    pub fn position_at(&self, t: f64) -> [f64; 2] {
        let k = self.times.partition_point(|&s| s <= t).max(1) - 1;
        self.positions[k]
    }

    pub fn end(&self) -> [f64; 2] {
        *self.positions.last().unwrap()
    }

    /// `(ε²t, εx)`.
    pub fn rescaled(&self, eps: f64) -> Trajectory {
        let s = eps * eps;
        Trajectory {
            dim: self.dim,
            times: self.times.iter().map(|t| t * s).collect(),
            positions: self.positions.iter().map(|p| [eps * p[0], eps * p[1]]).collect(),
            horizon: self.horizon * s,
        }
    }
}

/// Jump process with holding rate `λ̃ = λq` and jump law `p(x, ·)`, sampled by thinning.
///
/// Candidates arrive at rate `λ(x)α₂a₁`; a candidate `y = x − z`, `z ~ a/a₁`, is kept
/// with probability `μ(y)/α₂`. Kept jumps therefore occur at rate `λ(x)q(x)` with law
/// `a(x − y)μ(y)/q(x)`.
#[derive(Debug, Clone)]
pub struct JumpProcess {
    pub dim: usize,
    lambda: Coefficient,
    mu: Coefficient,
    sampler: KernelSampler,
    /// `sup μ`.
    pub alpha2: f64,
    pub a1: f64,
    pub lambda_max: f64,
}

impl JumpProcess {
    pub fn new(cfg: &ProcessConfig) -> Result<Self> {
        let d = cfg.kernel.dim();
        cfg.lambda.check(d, "lambda")?;
        cfg.mu.check(d, "mu")?;
        let a1 = cfg.kernel.moments()?.a1;
        Ok(Self {
            dim: d,
            lambda: cfg.lambda.clone(),
            mu: cfg.mu.clone(),
            sampler: KernelSampler::new(&cfg.kernel)?,
            alpha2: cfg.mu.bounds().1,
            a1,
            lambda_max: cfg.lambda.bounds().1,
        })
    }

    /// Upper bound on the candidate rate of the unscaled process.
    pub fn envelope_rate(&self) -> f64 {
        self.lambda_max * self.alpha2 * self.a1
    }

    /// Lower bound on the acceptance probability, `inf μ / sup μ`.
    pub fn acceptance_floor(&self) -> f64 {
        self.mu.bounds().0 / self.alpha2
    }

    /// One draw from `p(x, ·)`.
    pub fn sample_jump<R: Rng + ?Sized>(&self, x: [f64; 2], rng: &mut R) -> [f64; 2] {
        loop {
            let z = self.sampler.sample(rng);
            let y = [x[0] - z[0], x[1] - z[1]];
            if rng.random::<f64>() * self.alpha2 < self.mu.eval(&y[..self.dim]) {
                return y;
            }
        }
    }

    /// Runs the process of `L^ε` (medium `λ(·/ε)`, `μ(·/ε)`, jumps `εz`, rate `/ε²`) up to
    /// `horizon`, reporting every kept jump. `eps = 1` is the unscaled process.
    pub fn run<R: Rng + ?Sized>(
        &self,
        x0: [f64; 2],
        eps: f64,
        horizon: f64,
        rng: &mut R,
        mut on_jump: impl FnMut(f64, [f64; 2]),
    ) -> u64 {
        let d = self.dim;
        let rate_scale = self.alpha2 * self.a1 / (eps * eps);
        let mut x = x0;
        let mut t = 0.0;
        let mut jumps = 0;
        loop {
            let cell = [x[0] / eps, x[1] / eps];
            let rate = self.lambda.eval(&cell[..d]) * rate_scale;
            let e: f64 = Exp1.sample(rng);
            t += e / rate;
            if t > horizon {
                return jumps;
            }
            let z = self.sampler.sample(rng);
            let y = [cell[0] - z[0], cell[1] - z[1]];
            if rng.random::<f64>() * self.alpha2 < self.mu.eval(&y[..d]) {
                x = if d == 2 { [x[0] - eps * z[0], x[1] - eps * z[1]] } else { [x[0] - eps * z[0], 0.0] };
                jumps += 1;
                on_jump(t, x);
            }
        }
    }

    fn record<R: Rng + ?Sized>(&self, x0: [f64; 2], eps: f64, horizon: f64, rng: &mut R) -> Trajectory {
        let mut times = vec![0.0];
        let mut positions = vec![x0];
        self.run(x0, eps, horizon, rng, |t, x| {
            times.push(t);
            positions.push(x);
        });
        Trajectory { dim: self.dim, times, positions, horizon }
    }

    /// Path of the unscaled process on `[0, horizon]`.
    pub fn simulate_path<R: Rng + ?Sized>(&self, x0: [f64; 2], horizon: f64, rng: &mut R) -> Trajectory {
        self.record(x0, 1.0, horizon, rng)
    }

    /// Path of the process generated by `L^ε` itself, without the space-time rescaling.
    pub fn simulate_direct_eps<R: Rng + ?Sized>(&self, x0: [f64; 2], eps: f64, horizon: f64, rng: &mut R) -> Trajectory {
        self.record(x0, eps, horizon, rng)
    }

    /// Values at sorted `times` of the unscaled path, without storing jumps.
    pub fn snapshots<R: Rng + ?Sized>(&self, x0: [f64; 2], times: &[f64], rng: &mut R) -> (Vec<[f64; 2]>, u64) {
        let horizon = times.last().copied().unwrap_or(0.0);
        let mut out = Vec::with_capacity(times.len());
        let mut current = x0;
        let jumps = self.run(x0, 1.0, horizon, rng, |t, x| {
            while out.len() < times.len() && times[out.len()] < t {
                out.push(current);
            }
            current = x;
        });
        while out.len() < times.len() {
            out.push(current);
        }
        (out, jumps)
    }
}

/// Convenience wrapper around [`JumpProcess::simulate_path`].
pub fn simulate_path<R: Rng + ?Sized>(x0: [f64; 2], horizon: f64, cfg: &ProcessConfig, rng: &mut R) -> Result<Trajectory> {
    Ok(JumpProcess::new(cfg)?.simulate_path(x0, horizon, rng))
}

/// Convenience wrapper around [`JumpProcess::sample_jump`].
pub fn sample_jump<R: Rng + ?Sized>(x: [f64; 2], cfg: &ProcessConfig, rng: &mut R) -> Result<[f64; 2]> {
    Ok(JumpProcess::new(cfg)?.sample_jump(x, rng))
}
