//! Corrector solvers for `Aκ = rhs` with mean-zero normalization.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::operator::{check_solvability, grid_norm, CellOperator};
use crate::error::{Error, Result};
use crate::model::{FieldRole, PeriodicField};

/// Node count up to which `Auto` picks the direct backend.
pub const AUTO_DIRECT_MAX: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Direct,
    DeflatedNeumann,
    #[default]
    Auto,
}

impl Backend {
    pub fn resolve(self, len: usize) -> Backend {
        match self {
            Backend::Auto if len <= AUTO_DIRECT_MAX => Backend::Direct,
            Backend::Auto => Backend::DeflatedNeumann,
            b => b,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolverOptions {
    pub backend: Backend,
    /// Relative residual target of the deflated iteration.
    pub rel_tol: f64,
    pub max_iter: usize,
    /// Solvability tolerance relative to `‖rhs‖‖μ‖`.
    pub solvability_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { backend: Backend::Auto, rel_tol: 1e-10, max_iter: 10_000, solvability_tol: 1e-8 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrectorSolve {
    pub field: PeriodicField,
    /// `‖Aκ − rhs‖` per component, grid `L²` norm.
    pub residuals: Vec<f64>,
    pub solvability: Vec<f64>,
    pub backend: Backend,
    /// Deflated iterations summed over components.
    pub iterations: usize,
    pub contraction: Option<f64>,
    /// Two smallest singular values of the dense `A`.
    pub smallest_singular_values: Option<[f64; 2]>,
}

fn subtract_mean(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

/// Deflated Neumann iteration for `(P − E)κ = g` on `H₁ = {ψ : Σ μ q ψ = 0}`.
#[derive(Debug, Clone)]
pub struct DeflatedIterationState {
    q: Vec<f64>,
    weight: Vec<f64>,
    weight_sum: f64,
    pub iterations: usize,
    pub contraction: f64,
}

impl DeflatedIterationState {
    pub fn new(op: &CellOperator) -> Result<Self> {
        let q = op.g_part().to_vec();
        if let Some((i, &v)) = op.mu().iter().enumerate().find(|(_, &m)| !(m > 0.0)) {
            return Err(Error::SolverBreakdown(format!("mu({i}) = {v} is not positive")));
        }
        if let Some((i, &v)) = q.iter().enumerate().find(|(_, &g)| !(g > 0.0)) {
            return Err(Error::SolverBreakdown(format!("mass function q({i}) = {v} is not positive")));
        }
        let weight: Vec<f64> = op.mu().iter().zip(&q).map(|(m, g)| m * g).collect();
        let weight_sum = weight.iter().sum();
        let mut state = Self { q, weight, weight_sum, iterations: 0, contraction: f64::NAN };
        state.contraction = state.estimate_contraction(op, 500);
        Ok(state)
    }

    /// `Pφ = (â ⊛ (μφ)) / q`.
    pub fn apply_p(&self, op: &CellOperator, phi: &[f64]) -> Vec<f64> {
        op.apply_k(phi).into_iter().zip(&self.q).map(|(k, q)| k / q).collect()
    }

    pub fn weighted_functional(&self, psi: &[f64]) -> f64 {
        psi.iter().zip(&self.weight).map(|(p, w)| p * w).sum()
    }

    pub fn project(&self, psi: &mut [f64]) {
        let c = self.weighted_functional(psi) / self.weight_sum;
        psi.iter_mut().for_each(|x| *x -= c);
    }

    fn weighted_norm(&self, psi: &[f64]) -> f64 {
        psi.iter().zip(&self.weight).map(|(p, w)| w * p * p).sum::<f64>().sqrt()
    }

    /// Spectral radius of `P` on `H₁` by power iteration; `P` is self-adjoint in the `μq` weight.
    pub fn estimate_contraction(&self, op: &CellOperator, iters: usize) -> f64 {
        let len = self.q.len();
        let mut v: Vec<f64> = (0..len)
            .map(|i| ((i * 7919 + 13) % 101) as f64 / 101.0 - 0.5 + (i as f64 * 0.61).sin())
            .collect();
        self.project(&mut v);
        let mut rho = 0.0;
        let mut prev = f64::NAN;
        for _ in 0..iters {
            let n0 = self.weighted_norm(&v);
            if n0 == 0.0 {
                return 0.0;
            }
            v.iter_mut().for_each(|x| *x /= n0);
            let mut w = self.apply_p(op, &v);
            self.project(&mut w);
            rho = self.weighted_norm(&w);
            v = w;
            if (rho - prev).abs() < 1e-9 * rho.max(1e-300) {
                break;
            }
            prev = rho;
        }
        rho
    }

    /// Solves `Aκ = rhs`; the returned `κ` has grid mean zero.
    pub fn solve(&mut self, op: &CellOperator, rhs: &[f64], rel_tol: f64, max_iter: usize) -> Result<Vec<f64>> {
        let mut g: Vec<f64> = rhs.iter().zip(&self.q).map(|(r, q)| r / q).collect();
        self.project(&mut g);
        let g_norm = self.weighted_norm(&g);
        let mut kappa = vec![0.0; g.len()];
        if g_norm == 0.0 {
            return Ok(kappa);
        }
        for it in 1..=max_iter {
            let pk = self.apply_p(op, &kappa);
            let mut next: Vec<f64> = pk.iter().zip(&g).map(|(p, g)| p - g).collect();
            self.project(&mut next);
            let change: f64 = self.weighted_norm(
                &next.iter().zip(&kappa).map(|(a, b)| a - b).collect::<Vec<_>>(),
            );
            kappa = next;
            // change = ‖(P − E)κ_old − g‖ in the weighted norm
            if change <= rel_tol * g_norm {
                self.iterations += it;
                subtract_mean(&mut kappa);
                return Ok(kappa);
            }
        }
        self.iterations += max_iter;
        Err(Error::NonContraction { iterations: max_iter, rho: self.contraction })
    }
}

fn direct_solve(op: &CellOperator, rhs: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, [f64; 2])> {
    let a = op.dense()?;
    let len = a.nrows();
    let scale = op.g_part().iter().cloned().fold(0.0, f64::max);
    let mut aug = DMatrix::<f64>::zeros(len + 1, len);
    aug.view_mut((0, 0), (len, len)).copy_from(&a);
    aug.row_mut(len).fill(scale);
    let qr = aug.qr();
    let (q, r) = (qr.q(), qr.r());
    let rmax = r.diagonal().amax();
    if r.diagonal().iter().any(|d| d.abs() <= 1e-13 * rmax) {
        return Err(Error::SolverBreakdown(
            "augmented cell system is rank deficient beyond the constant nullspace".into(),
        ));
    }
    let mut out = Vec::with_capacity(rhs.len());
    for b in rhs {
        let mut rhs_aug = DVector::<f64>::zeros(len + 1);
        rhs_aug.rows_mut(0, len).copy_from_slice(b);
        let y = q.transpose() * rhs_aug;
        let x = r
            .solve_upper_triangular(&y)
            .ok_or_else(|| Error::SolverBreakdown("triangular solve failed".into()))?;
        let mut x: Vec<f64> = x.iter().cloned().collect();
        subtract_mean(&mut x);
        out.push(x);
    }
    let mut sv: Vec<f64> = a.singular_values().iter().cloned().collect();
    sv.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok((out, [sv[0], sv[1]]))
}

/// Solves `Aκ^c = rhs^c` for every component of `rhs`.
pub fn solve_corrector(
    op: &CellOperator,
    rhs: &PeriodicField,
    mu: &PeriodicField,
    role: FieldRole,
    opts: &SolverOptions,
) -> Result<CorrectorSolve> {
    let grid = op.grid();
    grid.same_as(&rhs.grid, "solve_corrector")?;
    let solvability = check_solvability(rhs, mu)?;
    let mu_norm = grid_norm(grid, mu.values());
    for (c, &s) in solvability.iter().enumerate() {
        let tol = opts.solvability_tol * grid_norm(grid, &rhs.components[c]) * mu_norm + 1e-14 * mu_norm;
        if s > tol {
            return Err(Error::SolverBreakdown(format!(
                "component {c}: right-hand side not orthogonal to mu (residual {s:.3e}, tolerance {tol:.3e})"
            )));
        }
    }
    let backend = opts.backend.resolve(grid.len());
    let (components, iterations, contraction, svals) = match backend {
        Backend::Direct => {
            let (x, sv) = direct_solve(op, &rhs.components)?;
            (x, 0, None, Some(sv))
        }
        _ => {
            let state = DeflatedIterationState::new(op)?;
            let results: Vec<Result<(Vec<f64>, usize)>> = rhs
                .components
                .par_iter()
                .map(|b| {
                    let mut s = state.clone();
                    s.iterations = 0;
                    s.solve(op, b, opts.rel_tol, opts.max_iter).map(|x| (x, s.iterations))
                })
                .collect();
            let mut comps = Vec::with_capacity(results.len());
            let mut iters = 0;
            for r in results {
                let (x, it) = r?;
                comps.push(x);
                iters += it;
            }
            (comps, iters, Some(state.contraction), None)
        }
    };
    let residuals = components
        .iter()
        .zip(&rhs.components)
        .map(|(x, b)| {
            let ax = op.apply(x);
            let r: Vec<f64> = ax.iter().zip(b).map(|(a, b)| a - b).collect();
            grid_norm(grid, &r)
        })
        .collect();
    Ok(CorrectorSolve {
        field: PeriodicField::from_components(grid, role, components),
        residuals,
        solvability,
        backend,
        iterations,
        contraction,
        smallest_singular_values: svals,
    })
}

pub fn solve_corrector1(
    op: &CellOperator,
    f: &PeriodicField,
    mu: &PeriodicField,
    opts: &SolverOptions,
) -> Result<CorrectorSolve> {
    solve_corrector(op, f, mu, FieldRole::Corrector1, opts)
}

/// Solves the symmetrized second-order system; `(i,j)` and `(j,i)` share one solve.
pub fn solve_corrector2(
    op: &CellOperator,
    rhs_sym: &PeriodicField,
    mu: &PeriodicField,
    opts: &SolverOptions,
) -> Result<CorrectorSolve> {
    let d = op.grid().dim();
    let upper: Vec<(usize, usize)> = (0..d).flat_map(|i| (i..d).map(move |j| (i, j))).collect();
    let reduced = PeriodicField::from_components(
        op.grid(),
        FieldRole::Other,
        upper.iter().map(|&(i, j)| rhs_sym.components[i * d + j].clone()).collect(),
    );
    let solved = solve_corrector(op, &reduced, mu, FieldRole::Corrector2, opts)?;
    let mut comps = vec![Vec::new(); d * d];
    let mut residuals = vec![0.0; d * d];
    let mut solvability = vec![0.0; d * d];
    for (k, &(i, j)) in upper.iter().enumerate() {
        for idx in [i * d + j, j * d + i] {
            comps[idx] = solved.field.components[k].clone();
            residuals[idx] = solved.residuals[k];
            solvability[idx] = solved.solvability[k];
        }
    }
    Ok(CorrectorSolve {
        field: PeriodicField::from_components(op.grid(), FieldRole::Corrector2, comps),
        residuals,
        solvability,
        ..solved
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::operator::{assemble_cell_operator, first_order_rhs};
    use crate::model::{fold_kernel, Coefficient, KernelSpec, TorusGrid, DEFAULT_TAIL_TOL};

    fn problem(n: usize) -> (CellOperator, PeriodicField, PeriodicField) {
        let grid = TorusGrid::new(1, n).unwrap();
        let folded = fold_kernel(&KernelSpec::compact_bump(1, 0.25).unwrap(), grid, DEFAULT_TAIL_TOL).unwrap();
        let mu = Coefficient::sinusoid(1.0, 0.5).sample(grid, FieldRole::Mu);
        let op = assemble_cell_operator(&folded, &mu).unwrap();
        let f = first_order_rhs(&folded.b_hat_field(), &mu).unwrap();
        (op, f, mu)
    }

    fn opts(backend: Backend) -> SolverOptions {
        SolverOptions { backend, ..Default::default() }
    }

    #[test]
    fn zero_rhs_gives_zero_corrector() {
        let grid = TorusGrid::new(1, 32).unwrap();
        let folded = fold_kernel(&KernelSpec::gaussian(1, 0.3).unwrap(), grid, DEFAULT_TAIL_TOL).unwrap();
        let mu = Coefficient::constant(3.0).sample(grid, FieldRole::Mu);
        let op = assemble_cell_operator(&folded, &mu).unwrap();
        let f = first_order_rhs(&folded.b_hat_field(), &mu).unwrap();
        for b in [Backend::Direct, Backend::DeflatedNeumann] {
            let s = solve_corrector1(&op, &f, &mu, &opts(b)).unwrap();
            assert!(s.field.max_abs() < 1e-12);
        }
    }

    #[test]
    fn backends_agree_and_contract() {
        let (op, f, mu) = problem(256);
        let direct = solve_corrector1(&op, &f, &mu, &opts(Backend::Direct)).unwrap();
        let defl = solve_corrector1(&op, &f, &mu, &opts(Backend::DeflatedNeumann)).unwrap();
        let diff = direct.field.values().iter().zip(defl.field.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-8, "{diff}");
        let rho = defl.contraction.unwrap();
        assert!(rho > 0.0 && rho < 1.0);
        assert!(direct.residuals[0] < 1e-10);
        let sv = direct.smallest_singular_values.unwrap();
        assert!(sv[0] < 1e-10 && sv[1] > 1e-6);
        assert!(direct.field.mean()[0].abs() < 1e-14);
    }

    #[test]
    fn refinement_is_second_order() {
        let (op1, f1, mu1) = problem(128);
        let (op2, f2, mu2) = problem(256);
        let k1 = solve_corrector1(&op1, &f1, &mu1, &opts(Backend::Direct)).unwrap();
        let k2 = solve_corrector1(&op2, &f2, &mu2, &opts(Backend::Direct)).unwrap();
        let h = 1.0 / 128.0;
        let diff = (0..128)
            .map(|i| (k1.field.values()[i] - k2.field.values()[2 * i]).abs())
            .fold(0.0, f64::max);
        assert!(diff < 10.0 * h * h, "{diff}");
    }

    #[test]
    fn deflated_state_invariants() {
        let (op, _, _) = problem(64);
        let st = DeflatedIterationState::new(&op).unwrap();
        let row = st.apply_p(&op, &vec![1.0; 64]);
        assert!(row.iter().all(|r| (r - 1.0).abs() < 1e-10));
        let mut psi: Vec<f64> = (0..64).map(|i| 1.0 + (i as f64).sin()).collect();
        st.project(&mut psi);
        let norm = psi.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(st.weighted_functional(&psi).abs() < 1e-9 * norm);
    }

    #[test]
    fn nonpositive_mu_breaks_down() {
        let grid = TorusGrid::new(1, 16).unwrap();
        let folded = fold_kernel(&KernelSpec::gaussian(1, 0.3).unwrap(), grid, DEFAULT_TAIL_TOL).unwrap();
        let mut mu = Coefficient::constant(1.0).sample(grid, FieldRole::Mu);
        mu.components[0][2] = 0.0;
        let op = assemble_cell_operator(&folded, &mu).unwrap();
        assert!(matches!(DeflatedIterationState::new(&op), Err(Error::SolverBreakdown(_))));
    }

    #[test]
    fn iteration_cap_reports_non_contraction() {
        let (op, f, mu) = problem(64);
        let o = SolverOptions { backend: Backend::DeflatedNeumann, max_iter: 2, ..Default::default() };
        match solve_corrector1(&op, &f, &mu, &o) {
            Err(Error::NonContraction { iterations, rho }) => {
                assert_eq!(iterations, 2);
                assert!(rho < 1.0);
            }
            other => panic!("expected non-contraction, got {other:?}"),
        }
    }

    #[test]
    fn auto_picks_by_size() {
        assert_eq!(Backend::Auto.resolve(256), Backend::Direct);
        assert_eq!(Backend::Auto.resolve(4096), Backend::DeflatedNeumann);
        assert_eq!(Backend::Direct.resolve(1 << 20), Backend::Direct);
    }
}
