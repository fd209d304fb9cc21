//! Jump kernels `a(z)`: even, nonnegative, integrable with finite second moment.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kernel families. Gaussians and bumps are normalized to unit mass.
///
/// * `Gaussian`: `a(z) = (2πσ²)^{-d/2} exp(-|z|²/2σ²)`.
/// * `CompactBump`: `a(z) = c (1 - |z|²/r²)³` on `|z| < r`.
/// * `Tabulated`: piecewise-linear samples, zero outside the sampled range. In
///   `d = 1` the samples cover the line (`z` strictly increasing); in `d = 2`
///   they are a radial profile over `z = |x| ≥ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelFamily {
    Gaussian { sigma: f64 },
    CompactBump { r: f64 },
    Tabulated { z: Vec<f64>, values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub dim: usize,
}

/// Zeroth, first and second moments. `m1` has `d` entries, `m2` is `d×d` row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelMoments {
    pub a1: f64,
    pub m1: Vec<f64>,
    pub m2: Vec<f64>,
}

impl KernelMoments {
    pub fn m2(&self, i: usize, j: usize) -> f64 {
        let d = self.m1.len();
        self.m2[i * d + j]
    }
}

impl KernelSpec {
    pub fn gaussian(dim: usize, sigma: f64) -> Result<Self> {
        Self::new(KernelFamily::Gaussian { sigma }, dim)
    }

    pub fn compact_bump(dim: usize, r: f64) -> Result<Self> {
        Self::new(KernelFamily::CompactBump { r }, dim)
    }

    pub fn tabulated(dim: usize, z: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::new(KernelFamily::Tabulated { z, values }, dim)
    }

    pub fn new(family: KernelFamily, dim: usize) -> Result<Self> {
        let spec = Self { family, dim };
        spec.validate()?;
        Ok(spec)
    }

    /// Parses a two-column `z a(z)` text table; `#` starts a comment.
    pub fn parse_table(dim: usize, text: &str) -> Result<Self> {
        let mut z = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|s| !s.is_empty())
                .collect();
            if cols.len() != 2 {
                return Err(Error::InvalidKernel(format!(
                    "line {}: expected two columns, got {}",
                    lineno + 1,
                    cols.len()
                )));
            }
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|e| {
                    Error::InvalidKernel(format!("line {}: {e}", lineno + 1))
                })
            };
            z.push(parse(cols[0])?);
            values.push(parse(cols[1])?);
        }
        Self::tabulated(dim, z, values)
    }

    fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.dim) {
            return Err(Error::InvalidKernel(format!("dimension {} not supported", self.dim)));
        }
        match &self.family {
            KernelFamily::Gaussian { sigma } => {
                if !(sigma.is_finite() && *sigma > 0.0) {
                    return Err(Error::InvalidKernel(format!("gaussian sigma must be > 0, got {sigma}")));
                }
            }
            KernelFamily::CompactBump { r } => {
                if !(r.is_finite() && *r > 0.0) {
                    return Err(Error::InvalidKernel(format!("bump radius must be > 0, got {r}")));
                }
            }
            KernelFamily::Tabulated { z, values } => {
                if z.len() != values.len() || z.len() < 2 {
                    return Err(Error::InvalidKernel("table needs at least two (z, a) rows".into()));
                }
                if z.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::InvalidKernel("table z values must be strictly increasing".into()));
                }
                if values.iter().chain(z.iter()).any(|v| !v.is_finite()) {
                    return Err(Error::InvalidKernel("table contains non-finite entries".into()));
                }
                if values.iter().any(|&v| v < 0.0) {
                    return Err(Error::InvalidKernel("kernel values must be nonnegative".into()));
                }
                let amax = values.iter().cloned().fold(0.0, f64::max);
                if amax <= 0.0 {
                    return Err(Error::InvalidKernel("kernel has zero mass".into()));
                }
                if self.dim == 2 {
                    if z[0] != 0.0 {
                        return Err(Error::InvalidKernel("radial profile must start at z = 0".into()));
                    }
                } else {
                    // evenness by sampling: a(z_i) against the interpolant at -z_i
                    for (&zi, &vi) in z.iter().zip(values.iter()) {
                        let mirrored = interp_table(z, values, -zi);
                        if (mirrored - vi).abs() > 1e-9 * amax {
                            return Err(Error::InvalidKernel(format!(
                                "tabulated kernel is not even: a({zi}) = {vi}, a({}) = {mirrored}",
                                -zi
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Radial profile: `a` as a function of `|z|`. For 1-D tables this is `a(ρ)`.
    pub fn profile(&self, rho: f64) -> f64 {
        let d = self.dim as i32;
        match &self.family {
            KernelFamily::Gaussian { sigma } => {
                let s2 = sigma * sigma;
                (2.0 * PI * s2).powf(-0.5 * d as f64) * (-rho * rho / (2.0 * s2)).exp()
            }
            KernelFamily::CompactBump { r } => {
                if rho >= *r {
                    return 0.0;
                }
                let t = 1.0 - rho * rho / (r * r);
                bump_norm(self.dim, *r) * t * t * t
            }
            KernelFamily::Tabulated { z, values } => interp_table(z, values, rho),
        }
    }

    /// Evaluates `a(z)`; `z` has `dim` entries.
    #[inline]
    pub fn eval(&self, z: &[f64]) -> f64 {
        match &self.family {
            KernelFamily::Tabulated { z: zs, values } if self.dim == 1 => interp_table(zs, values, z[0]),
            KernelFamily::Gaussian { sigma } => {
                let s2 = sigma * sigma;
                let r2: f64 = z.iter().map(|v| v * v).sum();
                (2.0 * PI * s2).powf(-0.5 * self.dim as f64) * (-r2 / (2.0 * s2)).exp()
            }
            KernelFamily::CompactBump { r } => {
                let r2: f64 = z.iter().map(|v| v * v).sum();
                let rr = r * r;
                if r2 >= rr {
                    return 0.0;
                }
                let t = 1.0 - r2 / rr;
                bump_norm(self.dim, *r) * t * t * t
            }
            KernelFamily::Tabulated { .. } => {
                let r2: f64 = z.iter().map(|v| v * v).sum();
                self.profile(r2.sqrt())
            }
        }
    }

    /// `sup_{|z| ≥ rho} a(z)`, used to bound lattice-sum remainders.
    pub fn tail_sup(&self, rho: f64) -> f64 {
        let rho = rho.max(0.0);
        match &self.family {
            KernelFamily::Gaussian { .. } | KernelFamily::CompactBump { .. } => self.profile(rho),
            KernelFamily::Tabulated { z, values } => {
                let mut sup: f64 = 0.0;
                for (&zi, &vi) in z.iter().zip(values.iter()) {
                    if zi.abs() >= rho {
                        sup = sup.max(vi);
                    }
                }
                sup.max(interp_table(z, values, rho)).max(interp_table(z, values, -rho))
            }
        }
    }

    /// Radius beyond which `a` never exceeds `tol` (exact support radius for compact kernels).
    pub fn support_radius(&self, tol: f64) -> f64 {
        match &self.family {
            KernelFamily::Gaussian { sigma } => {
                let peak = self.profile(0.0);
                if tol >= peak {
                    return 0.0;
                }
                sigma * (2.0 * (peak / tol).ln()).sqrt()
            }
            KernelFamily::CompactBump { r } => *r,
            KernelFamily::Tabulated { z, .. } => z.iter().map(|v| v.abs()).fold(0.0, f64::max),
        }
    }

    /// `∫ |z| a(z) dz`.
    pub fn abs_first_moment(&self) -> Result<f64> {
        match &self.family {
            KernelFamily::Gaussian { sigma } => Ok(if self.dim == 1 {
                sigma * (2.0 / PI).sqrt()
            } else {
                sigma * (PI / 2.0).sqrt()
            }),
            KernelFamily::CompactBump { r } => Ok(if self.dim == 1 { 35.0 * r / 128.0 } else { 128.0 * r / 315.0 }),
            KernelFamily::Tabulated { .. } => self.tabulated_radial_moment(1),
        }
    }

    /// Moments `a₁ = ∫a`, `M₁ = ∫z a`, `M₂ = ∫z⊗z a`. Closed form for the analytic
    /// families; exact segment-wise Gauss–Legendre for the piecewise-linear tables.
    pub fn moments(&self) -> Result<KernelMoments> {
        let d = self.dim;
        let mut m2 = vec![0.0; d * d];
        let (a1, m1, second) = match &self.family {
            KernelFamily::Gaussian { sigma } => (1.0, vec![0.0; d], sigma * sigma),
            KernelFamily::CompactBump { r } => {
                let s = if d == 1 { r * r / 9.0 } else { r * r / 10.0 };
                (1.0, vec![0.0; d], s)
            }
            KernelFamily::Tabulated { z, values } => {
                if d == 1 {
                    let a1 = gl_table(z, values, |_| 1.0);
                    let m1 = gl_table(z, values, |x| x);
                    let m2 = gl_table(z, values, |x| x * x);
                    (a1, vec![m1], m2)
                } else {
                    let a1 = self.tabulated_radial_moment(0)?;
                    // radial symmetry: ∫ z_i z_j a = δ_ij ∫ |z|² a / 2
                    let r2 = self.tabulated_radial_moment(2)?;
                    (a1, vec![0.0; 2], r2 / 2.0)
                }
            }
        };
        for i in 0..d {
            m2[i * d + i] = second;
        }
        let all = std::iter::once(a1).chain(m1.iter().cloned()).chain(std::iter::once(second));
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::MomentDivergence { last_change: f64::INFINITY });
        }
        if a1 <= 0.0 {
            return Err(Error::InvalidKernel(format!("kernel mass must be positive, got {a1}")));
        }
        Ok(KernelMoments { a1, m1, m2 })
    }

    /// `∫_{ℝ^d} |z|^k a(z) dz` for tables.
    fn tabulated_radial_moment(&self, k: i32) -> Result<f64> {
        let KernelFamily::Tabulated { z, values } = &self.family else {
            unreachable!()
        };
        let v = if self.dim == 1 {
            gl_table(z, values, |x| x.abs().powi(k))
        } else {
            2.0 * PI * gl_table(z, values, |x| x.abs().powi(k + 1))
        };
        if !v.is_finite() {
            return Err(Error::MomentDivergence { last_change: v });
        }
        Ok(v)
    }
}

fn bump_norm(d: usize, r: f64) -> f64 {
    if d == 1 {
        35.0 / (32.0 * r)
    } else {
        4.0 / (PI * r * r)
    }
}

fn interp_table(z: &[f64], values: &[f64], x: f64) -> f64 {
    let n = z.len();
    if x < z[0] || x > z[n - 1] {
        return 0.0;
    }
    let i = z.partition_point(|&zi| zi <= x);
    if i == 0 {
        return values[0];
    }
    if i >= n {
        return values[n - 1];
    }
    let t = (x - z[i - 1]) / (z[i] - z[i - 1]);
    values[i - 1] + t * (values[i] - values[i - 1])
}

/// `∫ a(x) w(x) dx` over the table with 4-point Gauss–Legendre per segment; exact for
/// polynomial weights up to degree 6 against the linear interpolant.
fn gl_table(z: &[f64], values: &[f64], w: impl Fn(f64) -> f64) -> f64 {
    const NODES: [f64; 4] = [-0.861_136_311_594_052_6, -0.339_981_043_584_856_3, 0.339_981_043_584_856_3, 0.861_136_311_594_052_6];
    const WEIGHTS: [f64; 4] = [0.347_854_845_137_453_9, 0.652_145_154_862_546_1, 0.652_145_154_862_546_1, 0.347_854_845_137_453_9];
    let mut total = 0.0;
    for s in 0..z.len() - 1 {
        let (z0, z1) = (z[s], z[s + 1]);
        let half = 0.5 * (z1 - z0);
        let mid = 0.5 * (z1 + z0);
        for (x, wt) in NODES.iter().zip(WEIGHTS.iter()) {
            let t = 0.5 * (1.0 + x);
            let a = values[s] + t * (values[s + 1] - values[s]);
            total += wt * half * a * w(mid + half * x);
        }
    }
    total
}

/// Convenience wrapper matching the operation name used across the crate.
pub fn kernel_moments(kernel: &KernelSpec, order: usize) -> Result<KernelMoments> {
    if order > 2 {
        return Err(Error::InvalidKernel(format!("moments beyond order 2 not supported (asked {order})")));
    }
    kernel.moments()
}
