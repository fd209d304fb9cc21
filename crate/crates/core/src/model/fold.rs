//! Lattice periodization of the kernel and of its first and second moment weights.
//!
//! For a node `w` wrapped to `[-1/2, 1/2)^d`:
//!
//! ```text
//! â(w) = Σ_k a(w+k),  b̂(w) = Σ_k a(w+k)(w+k),  ĉ(w) = Σ_k a(w+k)(w+k)⊗(w+k)
//! ```
//!
//! so that `∫_ℝ^d a(ξ−q) φ(ξ−q) μ(q) dq = ∫_𝕋 fold(ξ−η) μ(η) dη` for periodic `μ`.

use serde::{Deserialize, Serialize};

use super::conv::TorusFft;
use super::grid::{FieldRole, PeriodicField, TorusGrid};
use super::kernel::KernelSpec;
use crate::error::{Error, Result};

/// Largest lattice shell radius considered before giving up.
pub const K_MAX_CAP: usize = 64;

pub const DEFAULT_TAIL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldedKernel {
    pub grid: TorusGrid,
    /// `â` per node.
    pub a_hat: Vec<f64>,
    /// `b̂` per component, per node.
    pub b_hat: Vec<Vec<f64>>,
    /// Second-moment fold, `d*d` components row-major.
    pub c_hat: Vec<Vec<f64>>,
    pub k_max: usize,
    pub tail_tol: f64,
    /// Rigorous bound on the discarded lattice shells.
    pub remainder: f64,
    /// Kernel mass `a₁`.
    pub a1: f64,
}

impl FoldedKernel {
    /// `Σ â h^d − a₁`.
    pub fn mass_defect(&self) -> f64 {
        self.a_hat.iter().sum::<f64>() * self.grid.weight() - self.a1
    }

    pub fn b_hat_field(&self) -> PeriodicField {
        PeriodicField::from_components(self.grid, FieldRole::Other, self.b_hat.clone())
    }

    pub fn a_hat_field(&self) -> PeriodicField {
        PeriodicField::scalar(self.grid, FieldRole::FoldedKernel, self.a_hat.clone())
    }
}

fn shell_count(d: usize, s: usize) -> f64 {
    let s = s as f64;
    (2.0 * s + 1.0).powi(d as i32) - (2.0 * s - 1.0).powi(d as i32)
}

/// Bound on `Σ_{|k|∞ > K} a(w+k)·(1 + |w+k|)²` over `|w|∞ ≤ 1/2`.
fn remainder_bound(kernel: &KernelSpec, k: usize) -> f64 {
    let d = kernel.dim();
    let mut total = 0.0;
    for s in (k + 1)..(k + 4000) {
        let sup = kernel.tail_sup(s as f64 - 0.5);
        if sup == 0.0 {
            break;
        }
        let reach = 1.0 + (s as f64 + 0.5) * (d as f64).sqrt();
        let term = shell_count(d, s) * sup * reach * reach;
        total += term;
        if term < 1e-300 || term < total * 1e-17 {
            break;
        }
    }
    total
}

/// Smallest shell radius whose remainder bound is below `tail_tol`.
pub fn choose_k_max(kernel: &KernelSpec, tail_tol: f64) -> Result<(usize, f64)> {
    let mut last = f64::INFINITY;
    for k in 0..=K_MAX_CAP {
        last = remainder_bound(kernel, k);
        if last < tail_tol {
            return Ok((k, last));
        }
    }
    Err(Error::Truncation { achieved: last, tail_tol, k_max: K_MAX_CAP })
}

struct RawFolds {
    a: Vec<f64>,
    b: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
}

fn raw_folds(kernel: &KernelSpec, grid: TorusGrid, k_max: usize) -> RawFolds {
    let d = grid.dim();
    let len = grid.len();
    let mut a = vec![0.0; len];
    let mut b = vec![vec![0.0; len]; d];
    let mut c = vec![vec![0.0; len]; d * d];
    let km = k_max as i64;
    let shifts: Vec<[f64; 2]> = if d == 1 {
        (-km..=km).map(|k| [k as f64, 0.0]).collect()
    } else {
        (-km..=km)
            .flat_map(|k0| (-km..=km).map(move |k1| [k0 as f64, k1 as f64]))
            .collect()
    };
    for node in 0..len {
        let w = grid.wrapped_node(node);
        for s in &shifts {
            let y = [w[0] + s[0], w[1] + s[1]];
            let av = kernel.eval(&y[..d]);
            if av == 0.0 {
                continue;
            }
            a[node] += av;
            for i in 0..d {
                b[i][node] += av * y[i];
                for j in 0..d {
                    c[i * d + j][node] += av * y[i] * y[j];
                }
            }
        }
    }
    RawFolds { a, b, c }
}

fn symmetrize(grid: TorusGrid, v: &[f64], odd: bool) -> Vec<f64> {
    (0..grid.len())
        .map(|i| {
            let m = v[grid.neg_index(i)];
            if odd {
                0.5 * (v[i] - m)
            } else {
                0.5 * (v[i] + m)
            }
        })
        .collect()
}

/// Folds `a` (and its first/second moment weights) onto the torus grid.
pub fn fold_kernel(kernel: &KernelSpec, grid: TorusGrid, tail_tol: f64) -> Result<FoldedKernel> {
    if kernel.dim() != grid.dim() {
        return Err(Error::GridMismatch(format!(
            "kernel dimension {} vs grid dimension {}",
            kernel.dim(),
            grid.dim()
        )));
    }
    let moments = kernel.moments()?;
    let (k_max, remainder) = choose_k_max(kernel, tail_tol)?;
    let raw = raw_folds(kernel, grid, k_max);
    Ok(FoldedKernel {
        grid,
        a_hat: symmetrize(grid, &raw.a, false),
        b_hat: raw.b.iter().map(|v| symmetrize(grid, v, true)).collect(),
        c_hat: raw.c.iter().map(|v| symmetrize(grid, v, false)).collect(),
        k_max,
        tail_tol,
        remainder,
        a1: moments.a1,
    })
}

/// First-moment fold `b̂(w) = Σ_k a(w+k)(w+k)`, odd on the torus.
pub fn fold_moment_kernel(kernel: &KernelSpec, grid: TorusGrid, tail_tol: f64) -> Result<PeriodicField> {
    Ok(fold_kernel(kernel, grid, tail_tol)?.b_hat_field())
}

/// Second-moment fold `ĉ(w) = Σ_k a(w+k)(w+k)⊗(w+k)`, even on the torus.
pub fn fold_second_moment(kernel: &KernelSpec, grid: TorusGrid, tail_tol: f64) -> Result<PeriodicField> {
    let f = fold_kernel(kernel, grid, tail_tol)?;
    Ok(PeriodicField::from_components(grid, FieldRole::Other, f.c_hat))
}

/// `q(ξ) = ∫_𝕋 â(ξ−η) μ(η) dη` by circular convolution.
pub fn mass_function(folded: &FoldedKernel, mu: &PeriodicField) -> Result<PeriodicField> {
    folded.grid.same_as(&mu.grid, "mass_function")?;
    let fft = TorusFft::new(folded.grid);
    let q = fft.convolve(&folded.a_hat, mu.values());
    Ok(PeriodicField::scalar(folded.grid, FieldRole::Other, q))
}
