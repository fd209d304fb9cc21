use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid on the box `[−R, R)^d`, `m` points per axis, first axis slowest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleGrid {
    pub d: usize,
    pub half_width: f64,
    pub m: usize,
}

impl SampleGrid {
    pub fn new(d: usize, half_width: f64, m: usize) -> Result<Self> {
        if !(1..=2).contains(&d) {
            return Err(Error::Resolution(format!("dimension {d} not supported (1 or 2)")));
        }
        if !(half_width > 0.0) || m < 4 {
            return Err(Error::Resolution(format!("box needs R > 0 and m >= 4, got R={half_width}, m={m}")));
        }
        Ok(Self { d, half_width, m })
    }

    /// Grid with `Δ = ε / n_cell`, aligned so that `x_j / ε` falls on the `n_cell` torus grid.
    pub fn for_eps(d: usize, half_width: f64, eps: f64, n_cell: usize) -> Result<Self> {
        if n_cell < 8 {
            return Err(Error::Resolution(format!("n_cell = {n_cell} gives spacing coarser than eps/8")));
        }
        let cells = half_width / eps * n_cell as f64;
        let rounded = cells.round();
        if (cells - rounded).abs() > 1e-9 * cells.max(1.0) {
            return Err(Error::Resolution(format!(
                "R/eps * n_cell = {cells} is not an integer (R={half_width}, eps={eps}, n_cell={n_cell})"
            )));
        }
        Self::new(d, half_width, 2 * rounded as usize)
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.m as f64
    }

    pub fn len(&self) -> usize {
        self.m.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `Δ^d`.
    pub fn weight(&self) -> f64 {
        self.spacing().powi(self.d as i32)
    }

    pub fn multi_index(&self, flat: usize) -> [usize; 2] {
        if self.d == 1 {
            [flat, 0]
        } else {
            [flat / self.m, flat % self.m]
        }
    }

    pub fn node(&self, flat: usize) -> [f64; 2] {
        let idx = self.multi_index(flat);
        let h = self.spacing();
        let x = |k: usize| -self.half_width + k as f64 * h;
        [x(idx[0]), if self.d == 2 { x(idx[1]) } else { 0.0 }]
    }

    /// True for nodes in the outermost layer of the box.
    pub fn on_boundary(&self, flat: usize) -> bool {
        let idx = self.multi_index(flat);
        idx[..self.d].iter().any(|&k| k == 0 || k == self.m - 1)
    }

    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        (0..self.len())
            .map(|k| {
                let x = self.node(k);
                f(&x[..self.d])
            })
            .collect()
    }

    /// Discrete `L²`: `(Σ v² Δ^d)^{1/2}`.
    pub fn norm_l2(&self, v: &[f64]) -> f64 {
        (v.iter().map(|x| x * x).sum::<f64>() * self.weight()).sqrt()
    }

    /// `(Σ ν v² Δ^d)^{1/2}`.
    pub fn norm_weighted(&self, v: &[f64], nu: &[f64]) -> f64 {
        (v.iter().zip(nu).map(|(x, n)| n * x * x).sum::<f64>() * self.weight()).sqrt()
    }

    pub fn norm_sup(v: &[f64]) -> f64 {
        v.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}
