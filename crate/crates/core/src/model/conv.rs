//! Circular convolution on the torus grid via FFT.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::grid::TorusGrid;

/// FFT plans for one torus grid (1-D or 2-D tensor transforms).
#[derive(Clone)]
pub struct TorusFft {
    grid: TorusGrid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for TorusFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TorusFft").field("grid", &self.grid).finish()
    }
}

impl TorusFft {
    pub fn new(grid: TorusGrid) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(grid.n());
        let inverse = planner.plan_fft_inverse(grid.n());
        Self { grid, forward, inverse }
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.grid.n();
        if self.grid.dim() == 1 {
            plan.process(data);
            return;
        }
        for row in data.chunks_mut(n) {
            plan.process(row);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..n {
            for i in 0..n {
                col[i] = data[i * n + j];
            }
            plan.process(&mut col);
            for i in 0..n {
                data[i * n + j] = col[i];
            }
        }
    }

    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, &self.forward);
        data
    }

    /// Inverse transform, normalized, real part.
    pub fn inverse_real(&self, mut data: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut data, &self.inverse);
        let scale = 1.0 / self.grid.len() as f64;
        data.into_iter().map(|c| c.re * scale).collect()
    }

    /// Kernel spectrum premultiplied by the quadrature weight `h^d`.
    pub fn prepare(&self, kernel: &[f64]) -> PreparedKernel {
        let w = self.grid.weight();
        let spectrum = self.forward(kernel).into_iter().map(|c| c * w).collect();
        PreparedKernel { spectrum }
    }

    /// `(k ⊛ f)(ξ_i) = Σ_j k(ξ_i − ξ_j) f(ξ_j) h^d`.
    pub fn convolve(&self, kernel: &[f64], field: &[f64]) -> Vec<f64> {
        self.apply(&self.prepare(kernel), field)
    }

    pub fn apply(&self, kernel: &PreparedKernel, field: &[f64]) -> Vec<f64> {
        let mut spec = self.forward(field);
        for (s, k) in spec.iter_mut().zip(kernel.spectrum.iter()) {
            *s *= k;
        }
        self.inverse_real(spec)
    }
}

#[derive(Debug, Clone)]
pub struct PreparedKernel {
    spectrum: Vec<Complex64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(grid: TorusGrid, k: &[f64], f: &[f64]) -> Vec<f64> {
        (0..grid.len())
            .map(|i| {
                (0..grid.len())
                    .map(|j| k[grid.diff_index(i, j)] * f[j])
                    .sum::<f64>()
                    * grid.weight()
            })
            .collect()
    }

    #[test]
    fn matches_double_loop_1d_and_2d() {
        for (d, n) in [(1, 24), (2, 12)] {
            let grid = TorusGrid::new(d, n).unwrap();
            let k: Vec<f64> = (0..grid.len()).map(|i| ((i * 7 % 11) as f64).sin()).collect();
            let f: Vec<f64> = (0..grid.len()).map(|i| 1.0 + (i as f64 * 0.3).cos()).collect();
            let fft = TorusFft::new(grid);
            let got = fft.convolve(&k, &f);
            let want = brute(grid, &k, &f);
            for (g, w) in got.iter().zip(want.iter()) {
                assert!((g - w).abs() < 1e-13, "{g} vs {w}");
            }
        }
    }
}
