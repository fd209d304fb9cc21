//! Exact draws `z ~ a(·)/a₁` for every kernel family.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Beta, Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::{KernelFamily, KernelSpec};

#[derive(Debug, Clone)]
enum Method {
    Gaussian(Normal<f64>),
    /// `r(2B − 1)` with `B ~ Beta(4, 4)`.
    Bump1(f64, Beta<f64>),
    /// `ρ = r√S` with `S ~ Beta(1, 4)`, uniform angle.
    Bump2(f64, Beta<f64>),
    /// Piecewise-linear density on the line.
    Table1 { z: Vec<f64>, values: Vec<f64>, cum: Vec<f64> },
    /// Piecewise-linear radial profile; radial density `2πρ a(ρ)`.
    Table2 { z: Vec<f64>, values: Vec<f64>, cum: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct KernelSampler {
    dim: usize,
    method: Method,
}

/// `∫_{z0}^{z0+x} ρ (v0 + s(ρ − z0)) dρ`.
fn radial_segment_mass(z0: f64, v0: f64, s: f64, x: f64) -> f64 {
    v0 * (z0 * x + 0.5 * x * x) + s * (0.5 * z0 * x * x + x * x * x / 3.0)
}

fn cumulative(masses: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut cum = vec![0.0];
    for m in masses {
        cum.push(cum.last().unwrap() + m);
    }
    cum
}

impl KernelSampler {
    pub fn new(kernel: &KernelSpec) -> Result<Self> {
        let dim = kernel.dim();
        let bad = |e: String| Error::InvalidKernel(e);
        let method = match &kernel.family {
            KernelFamily::Gaussian { sigma } => Method::Gaussian(Normal::new(0.0, *sigma).map_err(|e| bad(e.to_string()))?),
            KernelFamily::CompactBump { r } if dim == 1 => {
                Method::Bump1(*r, Beta::new(4.0, 4.0).map_err(|e| bad(e.to_string()))?)
            }
            KernelFamily::CompactBump { r } => Method::Bump2(*r, Beta::new(1.0, 4.0).map_err(|e| bad(e.to_string()))?),
            KernelFamily::Tabulated { z, values } if dim == 1 => {
                let cum = cumulative(
                    z.windows(2).zip(values.windows(2)).map(|(zz, vv)| 0.5 * (vv[0] + vv[1]) * (zz[1] - zz[0])),
                );
                Method::Table1 { z: z.clone(), values: values.clone(), cum }
            }
            KernelFamily::Tabulated { z, values } => {
                let cum = cumulative(z.windows(2).zip(values.windows(2)).map(|(zz, vv)| {
                    let h = zz[1] - zz[0];
                    radial_segment_mass(zz[0], vv[0], (vv[1] - vv[0]) / h, h)
                }));
                Method::Table2 { z: z.clone(), values: values.clone(), cum }
            }
        };
        if let Method::Table1 { cum, .. } | Method::Table2 { cum, .. } = &method {
            if !(*cum.last().unwrap() > 0.0) {
                return Err(bad("tabulated kernel has zero mass".into()));
            }
        }
        Ok(Self { dim, method })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn pick_segment<R: Rng + ?Sized>(cum: &[f64], rng: &mut R) -> (usize, f64) {
        let total = *cum.last().unwrap();
        let u = rng.random::<f64>() * total;
        let s = (cum.partition_point(|&c| c <= u).max(1) - 1).min(cum.len() - 2);
        (s, (u - cum[s]).max(0.0))
    }

    /// One draw; entries beyond `dim` are zero.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        match &self.method {
            Method::Gaussian(n) => {
                let x = n.sample(rng);
                let y = if self.dim == 2 { n.sample(rng) } else { 0.0 };
                [x, y]
            }
            Method::Bump1(r, beta) => [r * (2.0 * beta.sample(rng) - 1.0), 0.0],
            Method::Bump2(r, beta) => {
                let rho = r * beta.sample(rng).sqrt();
                polar(rho, rng)
            }
            Method::Table1 { z, values, cum } => {
                let (s, target) = Self::pick_segment(cum, rng);
                let h = z[s + 1] - z[s];
                let v0 = values[s];
                let slope = (values[s + 1] - v0) / h;
                let disc = (v0 * v0 + 2.0 * slope * target).max(0.0);
                let denom = v0 + disc.sqrt();
                let x = if denom > 0.0 { 2.0 * target / denom } else { 0.0 };
                [z[s] + x.clamp(0.0, h), 0.0]
            }
            Method::Table2 { z, values, cum } => {
                let (s, target) = Self::pick_segment(cum, rng);
                let h = z[s + 1] - z[s];
                let v0 = values[s];
                let slope = (values[s + 1] - v0) / h;
                let (mut lo, mut hi) = (0.0, h);
                for _ in 0..64 {
                    let mid = 0.5 * (lo + hi);
                    if radial_segment_mass(z[s], v0, slope, mid) < target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                polar(z[s] + 0.5 * (lo + hi), rng)
            }
        }
    }
}

fn polar<R: Rng + ?Sized>(rho: f64, rng: &mut R) -> [f64; 2] {
    let phi = 2.0 * PI * rng.random::<f64>();
    [rho * phi.cos(), rho * phi.sin()]
}
