//! Rescaled nonlocal operator on a truncated box.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::grid::SampleGrid;
use crate::error::{Error, Result};
use crate::model::{Coefficient, KernelSpec};

/// Relative kernel level at which the stencil is cut.
pub const STENCIL_TOL: f64 = 1e-16;

/// Off-diagonal weights `W_ij = ε^{−d−2} a((x_i−x_j)/ε) λ(x_i/ε) μ(x_j/ε) Δ^d`.
///
/// Applied in difference form, `(Lu)_i = Σ_j W_ij (u_j − u_i)`, so rows sum to zero
/// and jumps leaving the box are dropped.
#[derive(Debug, Clone)]
pub struct DiscreteNonlocalOperator {
    pub grid: SampleGrid,
    pub eps: f64,
    offsets: Vec<[i64; 2]>,
    weights: Vec<f64>,
    lambda: Vec<f64>,
    mu: Vec<f64>,
    nu: Vec<f64>,
}

#[allow(non_snake_case)]
pub fn assemble_Leps(
    grid: SampleGrid,
    eps: f64,
    kernel: &KernelSpec,
    lambda: &Coefficient,
    mu: &Coefficient,
) -> Result<DiscreteNonlocalOperator> {
    if kernel.dim() != grid.d {
        return Err(Error::GridMismatch(format!("kernel dimension {} vs box dimension {}", kernel.dim(), grid.d)));
    }
    let h = grid.spacing();
    if h > eps / 8.0 * (1.0 + 1e-12) {
        return Err(Error::Resolution(format!("spacing {h} exceeds eps/8 = {}", eps / 8.0)));
    }
    let reach = kernel.support_radius(kernel.profile(0.0) * STENCIL_TOL) * eps;
    if reach >= grid.half_width {
        return Err(Error::BoxTruncation(format!(
            "kernel range {reach} at eps={eps} does not fit in the box of half-width {}",
            grid.half_width
        )));
    }
    let d = grid.d;
    let kmax = (reach / h).floor() as i64;
    let scale = eps.powi(-(d as i32) - 2) * grid.weight();
    let mut offsets = Vec::new();
    let mut weights = Vec::new();
    let range2 = if d == 2 { -kmax..=kmax } else { 0..=0 };
    for o0 in -kmax..=kmax {
        for o1 in range2.clone() {
            if o0 == 0 && o1 == 0 {
                continue;
            }
            let z = [o0 as f64 * h / eps, o1 as f64 * h / eps];
            let a = kernel.eval(&z[..d]);
            if a > 0.0 {
                offsets.push([o0, o1]);
                weights.push(scale * a);
            }
        }
    }
    let cell = |c: &Coefficient| grid.sample(|x| {
        let xi: Vec<f64> = x.iter().map(|v| v / eps).collect();
        c.eval(&xi)
    });
    let lam = cell(lambda);
    let m = cell(mu);
    if let Some(v) = lam.iter().chain(m.iter()).find(|v| !(**v > 0.0)) {
        return Err(Error::CoefficientBounds { name: "lambda/mu".into(), node: 0, value: *v });
    }
    let nu = m.iter().zip(&lam).map(|(m, l)| m / l).collect();
    Ok(DiscreteNonlocalOperator { grid, eps, offsets, weights, lambda: lam, mu: m, nu })
}

impl DiscreteNonlocalOperator {
    pub fn nu(&self) -> &[f64] {
        &self.nu
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn stencil_len(&self) -> usize {
        self.offsets.len()
    }

    #[inline]
    fn neighbour(&self, i: usize, o: [i64; 2]) -> Option<usize> {
        let m = self.grid.m as i64;
        if self.grid.d == 1 {
            let j = i as i64 + o[0];
            (0..m).contains(&j).then_some(j as usize)
        } else {
            let (i0, i1) = ((i as i64) / m, (i as i64) % m);
            let (j0, j1) = (i0 + o[0], i1 + o[1]);
            ((0..m).contains(&j0) && (0..m).contains(&j1)).then_some((j0 * m + j1) as usize)
        }
    }

    /// Calls `f(j, W_ij)` for every stored neighbour of row `i`.
    pub fn for_each_in_row(&self, i: usize, mut f: impl FnMut(usize, f64)) {
        let li = self.lambda[i];
        for (o, w) in self.offsets.iter().zip(&self.weights) {
            if let Some(j) = self.neighbour(i, *o) {
                f(j, w * li * self.mu[j]);
            }
        }
    }

    fn row_apply(&self, i: usize, u: &[f64]) -> f64 {
        let ui = u[i];
        let mut s = 0.0;
        for (o, w) in self.offsets.iter().zip(&self.weights) {
            if let Some(j) = self.neighbour(i, *o) {
                s += w * self.mu[j] * (u[j] - ui);
            }
        }
        self.lambda[i] * s
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        (0..u.len()).into_par_iter().map(|i| self.row_apply(i, u)).collect()
    }

    /// `−L_ii = Σ_j W_ij`.
    pub fn off_diagonal_row_sums(&self) -> Vec<f64> {
        (0..self.grid.len())
            .into_par_iter()
            .map(|i| {
                let mut s = 0.0;
                self.for_each_in_row(i, |_, w| s += w);
                s
            })
            .collect()
    }

    /// `‖L‖_∞ = max_i 2 Σ_j W_ij`.
    pub fn inf_norm(&self) -> f64 {
        self.off_diagonal_row_sums().iter().fold(0.0, |m, s| m.max(2.0 * s))
    }

    /// `max |ν_i W_ij − ν_j W_ji|` over stored entries.
    pub fn weighted_asymmetry(&self) -> f64 {
        let lookup: std::collections::HashMap<[i64; 2], f64> =
            self.offsets.iter().cloned().zip(self.weights.iter().cloned()).collect();
        (0..self.grid.len())
            .into_par_iter()
            .map(|i| {
                let mut worst: f64 = 0.0;
                for (o, w) in self.offsets.iter().zip(&self.weights) {
                    if let Some(j) = self.neighbour(i, *o) {
                        let back = lookup.get(&[-o[0], -o[1]]).copied().unwrap_or(0.0);
                        let wij = w * self.lambda[i] * self.mu[j];
                        let wji = back * self.lambda[j] * self.mu[i];
                        worst = worst.max((self.nu[i] * wij - self.nu[j] * wji).abs());
                    }
                }
                worst
            })
            .reduce(|| 0.0, f64::max)
    }

    /// `⟨Lu, u⟩_ν = Σ ν_i u_i (Lu)_i Δ^d`.
    pub fn weighted_form(&self, u: &[f64]) -> f64 {
        let lu = self.apply(u);
        lu.iter().zip(u).zip(&self.nu).map(|((l, u), n)| n * u * l).sum::<f64>() * self.grid.weight()
    }

    /// Dense matrix with diagonal `−Σ_j W_ij`; for small grids only.
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        let len = self.grid.len();
        if len > 4096 {
            return Err(Error::Resolution(format!("dense L^eps with {len} nodes exceeds 4096")));
        }
        let mut a = DMatrix::zeros(len, len);
        for i in 0..len {
            let mut s = 0.0;
            self.for_each_in_row(i, |j, w| {
                a[(i, j)] = w;
                s += w;
            });
            a[(i, i)] = -s;
        }
        Ok(a)
    }
}
