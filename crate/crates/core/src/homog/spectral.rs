//! Constant-coefficient limit problems solved exactly per Fourier mode on the periodized box.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use super::grid::SampleGrid;
use crate::cell::Matrix;
use crate::error::Result;
use crate::model::{TorusFft, TorusGrid};

/// Modes below this fraction of the largest coefficient are treated as roundoff.
const MODE_FLOOR: f64 = 1e-15;

#[derive(Debug, Clone)]
pub struct BoxSpectral {
    grid: SampleGrid,
    fft: TorusFft,
    /// Wavevector per flat index; Nyquist entries flagged.
    k: Vec<[f64; 2]>,
    nyquist: Vec<[bool; 2]>,
}

/// A smooth field on the box together with its spectral gradient and Hessian.
#[derive(Debug, Clone)]
pub struct LimitField {
    pub values: Vec<f64>,
    pub grad: Vec<Vec<f64>>,
    /// Row-major `d*d`.
    pub hess: Vec<Vec<f64>>,
}

impl BoxSpectral {
    pub fn new(grid: SampleGrid) -> Result<Self> {
        let torus = TorusGrid::new(grid.d, grid.m)?;
        let m = grid.m as i64;
        let base = 2.0 * PI / (2.0 * grid.half_width);
        let wave = |j: usize| {
            let j = j as i64;
            let s = if 2 * j >= m { j - m } else { j };
            (s as f64 * base, 2 * j == m)
        };
        let mut k = Vec::with_capacity(grid.len());
        let mut nyquist = Vec::with_capacity(grid.len());
        for flat in 0..grid.len() {
            let idx = grid.multi_index(flat);
            let (k0, n0) = wave(idx[0]);
            let (k1, n1) = if grid.d == 2 { wave(idx[1]) } else { (0.0, false) };
            k.push([k0, k1]);
            nyquist.push([n0, n1]);
        }
        Ok(Self { grid, fft: TorusFft::new(torus), k, nyquist })
    }

    pub fn grid(&self) -> SampleGrid {
        self.grid
    }

    fn forward_filtered(&self, v: &[f64]) -> Vec<Complex64> {
        let mut spec = self.fft.forward(v);
        let peak = spec.iter().fold(0.0_f64, |m, c| m.max(c.norm()));
        for c in spec.iter_mut() {
            if c.norm() <= MODE_FLOOR * peak {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        spec
    }

    /// `Θ : k⊗k` with the symmetric part of `Θ`.
    fn symbol(&self, theta: &Matrix, idx: usize) -> f64 {
        let d = self.grid.d;
        let k = self.k[idx];
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                s += 0.5 * (theta[i][j] + theta[j][i]) * k[i] * k[j];
            }
        }
        s
    }

    fn multiply(&self, spec: &[Complex64], f: impl Fn(usize) -> Complex64) -> Vec<f64> {
        let out: Vec<Complex64> = spec.iter().enumerate().map(|(i, c)| c * f(i)).collect();
        self.fft.inverse_real(out)
    }

    /// Spectral gradient and Hessian; odd-order Nyquist contributions are dropped.
    pub fn derivatives(&self, values: &[f64]) -> LimitField {
        let d = self.grid.d;
        let spec = self.forward_filtered(values);
        let grad = (0..d)
            .map(|i| {
                self.multiply(&spec, |n| {
                    if self.nyquist[n][i] {
                        Complex64::new(0.0, 0.0)
                    } else {
                        Complex64::new(0.0, self.k[n][i])
                    }
                })
            })
            .collect();
        let hess = (0..d * d)
            .map(|c| {
                let (i, j) = (c / d, c % d);
                self.multiply(&spec, |n| {
                    if i != j && (self.nyquist[n][i] || self.nyquist[n][j]) {
                        Complex64::new(0.0, 0.0)
                    } else {
                        Complex64::new(-self.k[n][i] * self.k[n][j], 0.0)
                    }
                })
            })
            .collect();
        LimitField { values: values.to_vec(), grad, hess }
    }

    /// `Θ:∇∇u`.
    pub fn apply_limit(&self, theta: &Matrix, u: &[f64]) -> Vec<f64> {
        let spec = self.forward_filtered(u);
        self.multiply(&spec, |n| Complex64::new(-self.symbol(theta, n), 0.0))
    }

    /// Solves `Θ:∇∇u − m u = f`.
    pub fn solve_resolvent(&self, theta: &Matrix, m_shift: f64, f: &[f64]) -> Vec<f64> {
        let spec = self.forward_filtered(f);
        self.multiply(&spec, |n| Complex64::new(1.0 / (-self.symbol(theta, n) - m_shift), 0.0))
    }

    /// `exp(tΘ:∇∇) f`.
    pub fn heat(&self, theta: &Matrix, t: f64, f: &[f64]) -> Vec<f64> {
        let spec = self.forward_filtered(f);
        self.multiply(&spec, |n| Complex64::new((-t * self.symbol(theta, n)).exp(), 0.0))
    }
}

/// `u₀` with `Θ:∇∇u₀ − m u₀ = f` on the periodized box.
pub fn solve_limit_resolvent(theta: &Matrix, m_shift: f64, f: &[f64], grid: SampleGrid) -> Result<Vec<f64>> {
    Ok(BoxSpectral::new(grid)?.solve_resolvent(theta, m_shift, f))
}

/// `‖Θ:∇∇u − m u − f‖` in the discrete `L²` norm.
pub fn limit_residual(theta: &Matrix, m_shift: f64, u: &[f64], f: &[f64], grid: SampleGrid) -> Result<f64> {
    let lu = BoxSpectral::new(grid)?.apply_limit(theta, u);
    let r: Vec<f64> = lu.iter().zip(u).zip(f).map(|((l, u), f)| l - m_shift * u - f).collect();
    Ok(grid.norm_l2(&r))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manufactured_solution() {
        let g = SampleGrid::new(1, 10.0, 512).unwrap();
        let f = g.sample(|x| (2.0 * x[0] * x[0] - 2.0) * (-x[0] * x[0]).exp());
        let theta = vec![vec![0.5]];
        let u = solve_limit_resolvent(&theta, 1.0, &f, g).unwrap();
        let exact = g.sample(|x| (-x[0] * x[0]).exp());
        let err = u.iter().zip(&exact).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-6, "{err}");
        assert!(limit_residual(&theta, 1.0, &u, &f, g).unwrap() < 1e-8 * g.norm_l2(&f));
    }

    #[test]
    fn constant_source_gives_constant() {
        let g = SampleGrid::new(1, 5.0, 64).unwrap();
        let f = vec![-2.0 * 0.7; 64];
        let u = solve_limit_resolvent(&vec![vec![0.3]], 2.0, &f, g).unwrap();
        assert!(u.iter().all(|v| (v - 0.7).abs() < 1e-14));
        let lf = BoxSpectral::new(g).unwrap().derivatives(&u);
        assert!(lf.grad[0].iter().all(|v| *v == 0.0));
        assert!(lf.hess[0].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn radial_source_gives_radial_solution() {
        let g = SampleGrid::new(2, 6.0, 64).unwrap();
        let f = g.sample(|x| -(-(x[0] * x[0] + x[1] * x[1])).exp());
        let theta = vec![vec![0.4, 0.0], vec![0.0, 0.4]];
        let u = solve_limit_resolvent(&theta, 1.0, &f, g).unwrap();
        let m = g.m;
        let mut worst: f64 = 0.0;
        for i in 0..m {
            for j in 0..m {
                // reflection x ↔ y and x ↦ −x (index k ↦ m−k, excluding the unpaired edge)
                worst = worst.max((u[i * m + j] - u[j * m + i]).abs());
                if i > 0 {
                    worst = worst.max((u[i * m + j] - u[(m - i) * m + j]).abs());
                }
            }
        }
        assert!(worst < 1e-8, "{worst}");
    }

    #[test]
    fn heat_matches_closed_form() {
        let g = SampleGrid::new(1, 10.0, 1024).unwrap();
        let s2: f64 = 0.5;
        let f = g.sample(|x| (-x[0] * x[0] / (2.0 * s2)).exp());
        let theta = vec![vec![0.75]];
        for t in [0.0, 0.3, 1.0] {
            let u = BoxSpectral::new(g).unwrap().heat(&theta, t, &f);
            let v = s2 + 2.0 * 0.75 * t;
            let exact = g.sample(|x| (s2 / v).sqrt() * (-x[0] * x[0] / (2.0 * v)).exp());
            let err = u.iter().zip(&exact).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(err < 1e-10, "t={t}: {err}");
        }
    }
}
