//! Effective matrix from the second-order solvability condition and from the Dirichlet form.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use super::operator::{check_solvability, grid_norm};
use crate::error::{Error, Result};
use crate::model::{FieldRole, FoldedKernel, PeriodicField, TorusFft};

/// Square matrix stored as rows.
pub type Matrix = Vec<Vec<f64>>;

pub fn zeros(d: usize) -> Matrix {
    vec![vec![0.0; d]; d]
}

pub fn symmetric_part(m: &Matrix) -> Matrix {
    let d = m.len();
    (0..d).map(|i| (0..d).map(|j| 0.5 * (m[i][j] + m[j][i])).collect()).collect()
}

pub fn min_sym_eigenvalue(m: &Matrix) -> f64 {
    let d = m.len();
    let s = symmetric_part(m);
    let mat = DMatrix::from_fn(d, d, |i, j| s[i][j]);
    SymmetricEigen::new(mat).eigenvalues.min()
}

pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().flatten().fold(0.0, |a, v| a.max(v.abs()))
}

/// `max |a − b| / max |a|`.
pub fn relative_difference(a: &Matrix, b: &Matrix) -> f64 {
    let diff = a
        .iter()
        .flatten()
        .zip(b.iter().flatten())
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
    diff / max_abs(a).max(f64::MIN_POSITIVE)
}

/// `⟨μ/λ⟩` by grid quadrature.
pub fn nu_mean(lambda: &PeriodicField, mu: &PeriodicField) -> Result<f64> {
    lambda.grid.same_as(&mu.grid, "nu_mean")?;
    Ok(mu.values().iter().zip(lambda.values()).map(|(m, l)| m / l).sum::<f64>() * mu.grid.weight())
}

/// The bracket `½(ĉ^{ij} ⊛ μ) − b̂^i ⊛ (μκ^j)`, row-major `d*d` components.
fn moment_bracket(kappa1: &PeriodicField, folded: &FoldedKernel, mu: &PeriodicField) -> Vec<Vec<f64>> {
    let grid = mu.grid;
    let d = grid.dim();
    let fft = TorusFft::new(grid);
    let c_mu: Vec<Vec<f64>> = folded.c_hat.iter().map(|c| fft.convolve(c, mu.values())).collect();
    let b_prep: Vec<_> = folded.b_hat.iter().map(|b| fft.prepare(b)).collect();
    let mut out = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            let mk: Vec<f64> = mu.values().iter().zip(&kappa1.components[j]).map(|(m, k)| m * k).collect();
            let b = fft.apply(&b_prep[i], &mk);
            out.push(c_mu[i * d + j].iter().zip(&b).map(|(c, b)| 0.5 * c - b).collect());
        }
    }
    out
}

fn check_grids(kappa1: &PeriodicField, folded: &FoldedKernel, lambda: &PeriodicField, mu: &PeriodicField) -> Result<()> {
    folded.grid.same_as(&kappa1.grid, "theta: corrector")?;
    folded.grid.same_as(&lambda.grid, "theta: lambda")?;
    folded.grid.same_as(&mu.grid, "theta: mu")?;
    if kappa1.ncomp() != folded.grid.dim() {
        return Err(Error::GridMismatch(format!(
            "first corrector has {} components, expected {}",
            kappa1.ncomp(),
            folded.grid.dim()
        )));
    }
    Ok(())
}

/// `(Θ, Θ̃)` with `Θ̃^{ij} = Σ_ξ μ(ξ)[½(ĉ^{ij}⊛μ) − b̂^i⊛(μκ^j)](ξ) h^d` and `Θ = Θ̃/⟨μ/λ⟩`.
pub fn compute_theta(
    kappa1: &PeriodicField,
    folded: &FoldedKernel,
    lambda: &PeriodicField,
    mu: &PeriodicField,
) -> Result<(Matrix, Matrix)> {
    check_grids(kappa1, folded, lambda, mu)?;
    let d = mu.grid.dim();
    let w = mu.grid.weight();
    let bracket = moment_bracket(kappa1, folded, mu);
    let mut tilde = zeros(d);
    for i in 0..d {
        for j in 0..d {
            tilde[i][j] = bracket[i * d + j].iter().zip(mu.values()).map(|(b, m)| b * m).sum::<f64>() * w;
        }
    }
    let nm = nu_mean(lambda, mu)?;
    let theta = tilde.iter().map(|r| r.iter().map(|v| v / nm).collect()).collect();
    Ok((theta, tilde))
}

/// Quadratic form `I^{ij}`, assembled pair by pair:
/// `Σ_{a,b} μ_a μ_b h^{2d} [ĉ + b̂^i Δκ^j + Δκ^i b̂^j + â Δκ^i Δκ^j](ξ_a−ξ_b)`, `Δκ = κ(ξ_a) − κ(ξ_b)`.
pub fn dirichlet_integral(kappa1: &PeriodicField, folded: &FoldedKernel, mu: &PeriodicField) -> Result<Matrix> {
    folded.grid.same_as(&kappa1.grid, "dirichlet_integral")?;
    folded.grid.same_as(&mu.grid, "dirichlet_integral")?;
    let grid = mu.grid;
    let d = grid.dim();
    let len = grid.len();
    let m = mu.values();
    let kap = &kappa1.components;
    let rows: Vec<[f64; 4]> = (0..len)
        .into_par_iter()
        .map(|a| {
            let mut acc = [0.0; 4];
            for b in 0..len {
                let r = grid.diff_index(a, b);
                let weight = m[a] * m[b];
                let mut dk = [0.0; 2];
                for i in 0..d {
                    dk[i] = kap[i][a] - kap[i][b];
                }
                for i in 0..d {
                    for j in 0..d {
                        let v = folded.c_hat[i * d + j][r]
                            + folded.b_hat[i][r] * dk[j]
                            + dk[i] * folded.b_hat[j][r]
                            + folded.a_hat[r] * dk[i] * dk[j];
                        acc[i * d + j] += weight * v;
                    }
                }
            }
            acc
        })
        .collect();
    let w2 = grid.weight() * grid.weight();
    let mut out = zeros(d);
    for acc in &rows {
        for i in 0..d {
            for j in 0..d {
                out[i][j] += acc[i * d + j];
            }
        }
    }
    for row in out.iter_mut() {
        row.iter_mut().for_each(|v| *v *= w2);
    }
    Ok(out)
}

/// `Θ_sym = I / (2⟨μ/λ⟩)`.
pub fn theta_dirichlet_form(
    kappa1: &PeriodicField,
    folded: &FoldedKernel,
    lambda: &PeriodicField,
    mu: &PeriodicField,
) -> Result<Matrix> {
    check_grids(kappa1, folded, lambda, mu)?;
    let i = dirichlet_integral(kappa1, folded, mu)?;
    let nm = nu_mean(lambda, mu)?;
    Ok(i.iter().map(|r| r.iter().map(|v| v / (2.0 * nm)).collect()).collect())
}

/// `rhs^{ij} = Θ^{ij}/λ − [½(ĉ^{ij}⊛μ) − b̂^i⊛(μκ^j)]`, unsymmetrized.
///
/// Fails with `InconsistentTheta` when `|⟨rhs^{ij}, μ⟩| > tol·‖rhs^{ij}‖‖μ‖`.
pub fn second_order_rhs(
    theta: &Matrix,
    kappa1: &PeriodicField,
    folded: &FoldedKernel,
    lambda: &PeriodicField,
    mu: &PeriodicField,
    tol: f64,
) -> Result<PeriodicField> {
    check_grids(kappa1, folded, lambda, mu)?;
    let grid = mu.grid;
    let d = grid.dim();
    let bracket = moment_bracket(kappa1, folded, mu);
    let comps: Vec<Vec<f64>> = (0..d * d)
        .map(|c| {
            let t = theta[c / d][c % d];
            bracket[c].iter().zip(lambda.values()).map(|(b, l)| t / l - b).collect()
        })
        .collect();
    let rhs = PeriodicField::from_components(grid, FieldRole::Other, comps);
    let residual = check_solvability(&rhs, mu)?;
    let mu_norm = grid_norm(grid, mu.values());
    for (c, &r) in residual.iter().enumerate() {
        let tolerance = tol * grid_norm(grid, &rhs.components[c]) * mu_norm + 1e-14 * mu_norm;
        if r > tolerance {
            return Err(Error::InconsistentTheta { residual: r, tolerance });
        }
    }
    Ok(rhs)
}

/// `½(rhs^{ij} + rhs^{ji})`.
pub fn symmetrize_rhs(rhs: &PeriodicField) -> PeriodicField {
    let d = rhs.grid.dim();
    let comps = (0..d * d)
        .map(|c| {
            let (i, j) = (c / d, c % d);
            rhs.components[i * d + j]
                .iter()
                .zip(&rhs.components[j * d + i])
                .map(|(a, b)| 0.5 * (a + b))
                .collect()
        })
        .collect();
    PeriodicField::from_components(rhs.grid, FieldRole::Other, comps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{fold_kernel, Coefficient, KernelSpec, TorusGrid, DEFAULT_TAIL_TOL};

    #[test]
    fn constant_coefficients_closed_form() {
        let grid = TorusGrid::new(1, 64).unwrap();
        let folded = fold_kernel(&KernelSpec::gaussian(1, 1.0).unwrap(), grid, DEFAULT_TAIL_TOL).unwrap();
        let lam = Coefficient::constant(2.0).sample(grid, FieldRole::Lambda);
        let mu = Coefficient::constant(3.0).sample(grid, FieldRole::Mu);
        let k = PeriodicField::zeros(grid, FieldRole::Corrector1, 1);
        let (theta, tilde) = compute_theta(&k, &folded, &lam, &mu).unwrap();
        assert!((theta[0][0] - 3.0).abs() < 1e-8);
        assert!((tilde[0][0] - 4.5).abs() < 1e-8);
        let sym = theta_dirichlet_form(&k, &folded, &lam, &mu).unwrap();
        assert!((sym[0][0] - 3.0).abs() < 1e-8);
        let rhs = second_order_rhs(&theta, &k, &folded, &lam, &mu, 1e-8).unwrap();
        assert!(rhs.max_abs() < 1e-8);
    }

    #[test]
    fn dirichlet_integral_is_symmetric_psd() {
        let grid = TorusGrid::new(2, 12).unwrap();
        let folded = fold_kernel(&KernelSpec::gaussian(2, 0.3).unwrap(), grid, DEFAULT_TAIL_TOL).unwrap();
        let mu = Coefficient::sinusoid(1.0, 0.5).sample(grid, FieldRole::Mu);
        let k = PeriodicField::from_components(
            grid,
            FieldRole::Corrector1,
            vec![
                (0..grid.len()).map(|i| (i as f64 * 0.3).sin()).collect(),
                (0..grid.len()).map(|i| (i as f64 * 0.17).cos()).collect(),
            ],
        );
        let i = dirichlet_integral(&k, &folded, &mu).unwrap();
        assert!((i[0][1] - i[1][0]).abs() < 1e-12 * max_abs(&i));
        assert!(min_sym_eigenvalue(&i) >= -1e-12 * max_abs(&i));
    }

    #[test]
    fn wrong_theta_is_inconsistent() {
        let grid = TorusGrid::new(1, 32).unwrap();
        let folded = fold_kernel(&KernelSpec::gaussian(1, 0.3).unwrap(), grid, DEFAULT_TAIL_TOL).unwrap();
        let lam = Coefficient::constant(1.0).sample(grid, FieldRole::Lambda);
        let mu = Coefficient::constant(1.0).sample(grid, FieldRole::Mu);
        let k = PeriodicField::zeros(grid, FieldRole::Corrector1, 1);
        let bad = vec![vec![1.0]];
        assert!(matches!(
            second_order_rhs(&bad, &k, &folded, &lam, &mu, 1e-8),
            Err(Error::InconsistentTheta { .. })
        ));
    }

    #[test]
    fn min_eigenvalue_of_symmetric_part() {
        let m = vec![vec![2.0, 1.0], vec![-1.0, 2.0]];
        assert!((min_sym_eigenvalue(&m) - 2.0).abs() < 1e-14);
        let m = vec![vec![1.0, 3.0], vec![3.0, 1.0]];
        assert!((min_sym_eigenvalue(&m) + 2.0).abs() < 1e-14);
    }
}
