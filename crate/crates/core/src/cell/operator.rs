//! The cell operator `A = K − G` on the torus and the first-order right-hand side.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{FieldRole, FoldedKernel, PeriodicField, PreparedKernel, TorusFft, TorusGrid};

/// Largest node count for which a dense matrix is materialized.
pub const DENSE_CAP: usize = 4096;

/// `(Aφ)(ξ_i) = Σ_j â(ξ_i−ξ_j) μ_j (φ_j − φ_i) h^d`.
///
/// Applied matrix-free by FFT; [`CellOperator::dense`] materializes `K − diag(G)`.
#[derive(Debug, Clone)]
pub struct CellOperator {
    grid: TorusGrid,
    fft: TorusFft,
    kernel: PreparedKernel,
    a_hat: Vec<f64>,
    mu: Vec<f64>,
    g_part: Vec<f64>,
}

pub fn assemble_cell_operator(folded: &FoldedKernel, mu: &PeriodicField) -> Result<CellOperator> {
    folded.grid.same_as(&mu.grid, "assemble_cell_operator")?;
    let grid = folded.grid;
    let fft = TorusFft::new(grid);
    let kernel = fft.prepare(&folded.a_hat);
    let g_part = fft.apply(&kernel, mu.values());
    Ok(CellOperator {
        grid,
        fft,
        kernel,
        a_hat: folded.a_hat.clone(),
        mu: mu.values().to_vec(),
        g_part,
    })
}

impl CellOperator {
    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// Multiplier `G(ξ) = q(ξ)`.
    pub fn g_part(&self) -> &[f64] {
        &self.g_part
    }

    pub fn fft(&self) -> &TorusFft {
        &self.fft
    }

    /// `Kφ = â ⊛ (μφ)`.
    pub fn apply_k(&self, phi: &[f64]) -> Vec<f64> {
        let w: Vec<f64> = self.mu.iter().zip(phi).map(|(m, p)| m * p).collect();
        self.fft.apply(&self.kernel, &w)
    }

    pub fn apply(&self, phi: &[f64]) -> Vec<f64> {
        let k = self.apply_k(phi);
        k.iter()
            .zip(&self.g_part)
            .zip(phi)
            .map(|((k, g), p)| k - g * p)
            .collect()
    }

    /// `Aᵀψ`; the grid inner product has a uniform weight so this is also the weighted adjoint.
    pub fn apply_transpose(&self, psi: &[f64]) -> Vec<f64> {
        let conv = self.fft.apply(&self.kernel, psi);
        (0..psi.len())
            .map(|j| self.mu[j] * conv[j] - self.g_part[j] * psi[j])
            .collect()
    }

    fn check_dense(&self) -> Result<usize> {
        let len = self.grid.len();
        if len > DENSE_CAP {
            return Err(Error::Resolution(format!(
                "dense cell operator with {len} nodes exceeds the cap of {DENSE_CAP}"
            )));
        }
        Ok(len)
    }

    /// Dense `K_ij = â(ξ_i−ξ_j) μ_j h^d`.
    pub fn k_dense(&self) -> Result<DMatrix<f64>> {
        let len = self.check_dense()?;
        let w = self.grid.weight();
        Ok(DMatrix::from_fn(len, len, |i, j| {
            self.a_hat[self.grid.diff_index(i, j)] * self.mu[j] * w
        }))
    }

    pub fn dense(&self) -> Result<DMatrix<f64>> {
        let mut a = self.k_dense()?;
        for i in 0..a.nrows() {
            a[(i, i)] -= self.g_part[i];
        }
        Ok(a)
    }
}

/// `f^i = b̂^i ⊛ μ`, one component per spatial direction.
pub fn first_order_rhs(b_hat: &PeriodicField, mu: &PeriodicField) -> Result<PeriodicField> {
    b_hat.grid.same_as(&mu.grid, "first_order_rhs")?;
    let fft = TorusFft::new(mu.grid);
    let comps = b_hat
        .components
        .iter()
        .map(|b| fft.convolve(b, mu.values()))
        .collect();
    Ok(PeriodicField::from_components(mu.grid, FieldRole::Other, comps))
}

/// `|⟨rhs_c, μ⟩_grid|` per component.
pub fn check_solvability(rhs: &PeriodicField, mu: &PeriodicField) -> Result<Vec<f64>> {
    rhs.grid.same_as(&mu.grid, "check_solvability")?;
    let w = rhs.grid.weight();
    Ok(rhs
        .components
        .iter()
        .map(|c| (c.iter().zip(mu.values()).map(|(r, m)| r * m).sum::<f64>() * w).abs())
        .collect())
}

/// Discrete `L²(𝕋^d)` norm, `(Σ v² h^d)^{1/2}`.
pub fn grid_norm(grid: TorusGrid, v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() * grid.weight()).sqrt()
}
