//! Cell problems on the torus: first and second correctors and the effective matrix.

pub mod operator;
pub mod solve;
pub mod theta;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use operator::{assemble_cell_operator, check_solvability, first_order_rhs, grid_norm, CellOperator, DENSE_CAP};
pub use solve::{
    solve_corrector, solve_corrector1, solve_corrector2, Backend, CorrectorSolve, DeflatedIterationState,
    SolverOptions, AUTO_DIRECT_MAX,
};
pub use theta::{
    compute_theta, dirichlet_integral, min_sym_eigenvalue, nu_mean, relative_difference, second_order_rhs,
    symmetric_part, symmetrize_rhs, theta_dirichlet_form, Matrix,
};

use crate::error::Result;
use crate::model::{
    fold_kernel, validate_coefficients, Coefficient, FieldRole, KernelSpec, PeriodicField, TorusGrid,
    DEFAULT_TAIL_TOL,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellProblem {
    pub kernel: KernelSpec,
    pub lambda: Coefficient,
    pub mu: Coefficient,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CellOptions {
    pub solver: SolverOptions,
    pub tail_tol: f64,
    /// Compare against the solve on `n/2` and warn above `refinement_tol`.
    pub refinement_check: bool,
    pub refinement_tol: f64,
}

impl Default for CellOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            tail_tol: DEFAULT_TAIL_TOL,
            refinement_check: true,
            refinement_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellDiagnostics {
    pub k_max: usize,
    pub fold_remainder: f64,
    pub mass_defect: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub nu_mean: f64,
    pub backend: Backend,
    pub solvability_first: Vec<f64>,
    pub solvability_second: Vec<f64>,
    pub residual_first: Vec<f64>,
    pub residual_second: Vec<f64>,
    pub iterations: usize,
    pub contraction: Option<f64>,
    pub smallest_singular_values: Option<[f64; 2]>,
    /// Smallest eigenvalue of `sym(Θ)`.
    pub pd_margin: f64,
    /// `‖sym(Θ) − Θ_I‖ / ‖Θ_I‖`.
    pub theta_cross_relative: f64,
    /// `‖Θ_n − Θ_{n/2}‖ / ‖Θ_n‖` when computed.
    pub refinement_change: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellSolution {
    pub grid: TorusGrid,
    pub kappa1: PeriodicField,
    pub kappa2: PeriodicField,
    pub theta: Matrix,
    pub theta_tilde: Matrix,
    /// `I / (2⟨μ/λ⟩)`.
    pub theta_dirichlet: Matrix,
    pub diagnostics: CellDiagnostics,
}

/// Fields sampled and folded for one grid.
pub struct CellSetup {
    pub grid: TorusGrid,
    pub folded: crate::model::FoldedKernel,
    pub lambda: PeriodicField,
    pub mu: PeriodicField,
    pub op: CellOperator,
    pub alpha: (f64, f64),
}

pub fn setup_cell(problem: &CellProblem, n: usize, tail_tol: f64) -> Result<CellSetup> {
    let d = problem.kernel.dim();
    problem.lambda.check(d, "lambda")?;
    problem.mu.check(d, "mu")?;
    let grid = TorusGrid::new(d, n)?;
    let folded = fold_kernel(&problem.kernel, grid, tail_tol)?;
    let lambda = problem.lambda.sample(grid, FieldRole::Lambda);
    let mu = problem.mu.sample(grid, FieldRole::Mu);
    let alpha = validate_coefficients(&lambda, &mu)?;
    let op = assemble_cell_operator(&folded, &mu)?;
    Ok(CellSetup { grid, folded, lambda, mu, op, alpha })
}

fn solve_on(problem: &CellProblem, n: usize, opts: &CellOptions) -> Result<CellSolution> {
    let s = setup_cell(problem, n, opts.tail_tol)?;
    let f = first_order_rhs(&s.folded.b_hat_field(), &s.mu)?;
    let k1 = solve_corrector1(&s.op, &f, &s.mu, &opts.solver)?;
    let (theta, theta_tilde) = compute_theta(&k1.field, &s.folded, &s.lambda, &s.mu)?;
    let theta_dirichlet = theta_dirichlet_form(&k1.field, &s.folded, &s.lambda, &s.mu)?;
    let rhs2 = second_order_rhs(&theta, &k1.field, &s.folded, &s.lambda, &s.mu, opts.solver.solvability_tol)?;
    let k2 = solve_corrector2(&s.op, &symmetrize_rhs(&rhs2), &s.mu, &opts.solver)?;
    let pd_margin = min_sym_eigenvalue(&theta);
    let mut warnings = Vec::new();
    if !(pd_margin > 0.0) {
        warnings.push(format!(
            "symmetric part of theta is not positive definite (min eigenvalue {pd_margin:.3e}); grid n={n} likely under-resolves the kernel"
        ));
    }
    let diagnostics = CellDiagnostics {
        k_max: s.folded.k_max,
        fold_remainder: s.folded.remainder,
        mass_defect: s.folded.mass_defect(),
        alpha_min: s.alpha.0,
        alpha_max: s.alpha.1,
        nu_mean: nu_mean(&s.lambda, &s.mu)?,
        backend: k1.backend,
        solvability_first: k1.solvability.clone(),
        solvability_second: check_solvability(&rhs2, &s.mu)?,
        residual_first: k1.residuals.clone(),
        residual_second: k2.residuals.clone(),
        iterations: k1.iterations + k2.iterations,
        contraction: k1.contraction,
        smallest_singular_values: k1.smallest_singular_values,
        pd_margin,
        theta_cross_relative: relative_difference(&theta_dirichlet, &symmetric_part(&theta)),
        refinement_change: None,
        warnings,
    };
    Ok(CellSolution { grid: s.grid, kappa1: k1.field, kappa2: k2.field, theta, theta_tilde, theta_dirichlet, diagnostics })
}

/// Full cell pipeline: fold, solve `κ₁`, compute `Θ` both ways, solve `κ₂`.
pub fn solve_cell_problem(problem: &CellProblem, opts: &CellOptions) -> Result<CellSolution> {
    let mut sol = solve_on(problem, problem.n, opts)?;
    let coarse_n = problem.n / 2;
    if opts.refinement_check && problem.n % 2 == 0 && coarse_n >= 4 {
        let coarse_opts = CellOptions { refinement_check: false, ..*opts };
        match solve_on(problem, coarse_n, &coarse_opts) {
            Ok(coarse) => {
                let change = relative_difference(&sol.theta, &coarse.theta);
                sol.diagnostics.refinement_change = Some(change);
                if change > opts.refinement_tol {
                    sol.diagnostics.warnings.push(format!(
                        "theta changes by {change:.3e} (relative) between n={coarse_n} and n={}; grid likely under-resolved",
                        problem.n
                    ));
                }
            }
            Err(e) => sol
                .diagnostics
                .warnings
                .push(format!("refinement check on n={coarse_n} failed: {e}; grid likely under-resolved")),
        }
    }
    Ok(sol)
}

impl CellSolution {
    /// `(ξ, κ₁…, κ₂…)` per node, full precision.
    pub fn fields_csv(&self) -> String {
        let d = self.grid.dim();
        let mut out = String::new();
        let axes = ["xi1", "xi2"];
        let mut head: Vec<String> = axes[..d].iter().map(|s| s.to_string()).collect();
        head.extend((0..d).map(|i| format!("kappa1_{}", i + 1)));
        head.extend((0..d * d).map(|c| format!("kappa2_{}{}", c / d + 1, c % d + 1)));
        out.push_str(&head.join(","));
        out.push('\n');
        for node in 0..self.grid.len() {
            let x = self.grid.node(node);
            let mut vals: Vec<f64> = x[..d].to_vec();
            vals.extend(self.kappa1.components.iter().map(|c| c[node]));
            vals.extend(self.kappa2.components.iter().map(|c| c[node]));
            let row: Vec<String> = vals.iter().map(|v| format!("{v:.16e}")).collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    /// JSON document; node arrays only when `with_fields`.
    pub fn to_json(&self, with_fields: bool) -> serde_json::Value {
        let mut v = serde_json::json!({
            "dim": self.grid.dim(),
            "n": self.grid.n(),
            "theta": self.theta,
            "theta_tilde": self.theta_tilde,
            "theta_dirichlet": self.theta_dirichlet,
            "diagnostics": self.diagnostics,
        });
        if with_fields {
            v["kappa1"] = serde_json::json!(self.kappa1.components);
            v["kappa2"] = serde_json::json!(self.kappa2.components);
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_problem_has_zero_correctors() {
        let p = CellProblem {
            kernel: KernelSpec::gaussian(1, 1.0).unwrap(),
            lambda: Coefficient::constant(2.0),
            mu: Coefficient::constant(3.0),
            n: 64,
        };
        let s = solve_cell_problem(&p, &CellOptions::default()).unwrap();
        assert!(s.kappa1.max_abs() < 1e-12);
        assert!(s.kappa2.max_abs() < 1e-8);
        assert!((s.theta[0][0] - 3.0).abs() < 1e-8);
        assert!(s.diagnostics.warnings.is_empty(), "{:?}", s.diagnostics.warnings);
    }

    #[test]
    fn coarse_bump_warns() {
        let p = CellProblem {
            kernel: KernelSpec::compact_bump(1, 0.25).unwrap(),
            lambda: Coefficient::constant(1.0),
            mu: Coefficient::sinusoid(1.0, 0.5),
            n: 8,
        };
        let s = solve_cell_problem(&p, &CellOptions::default()).unwrap();
        assert!(!s.diagnostics.warnings.is_empty());
    }

    #[test]
    fn csv_round_trips() {
        let p = CellProblem {
            kernel: KernelSpec::gaussian(1, 0.3).unwrap(),
            lambda: Coefficient::constant(1.0),
            mu: Coefficient::sinusoid(1.0, 0.5),
            n: 32,
        };
        let s = solve_cell_problem(&p, &CellOptions::default()).unwrap();
        let csv = s.fields_csv();
        let rows: Vec<Vec<f64>> = csv
            .lines()
            .skip(1)
            .map(|l| l.split(',').map(|t| t.parse().unwrap()).collect())
            .collect();
        assert_eq!(rows.len(), 32);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r[1], s.kappa1.values()[i]);
            assert_eq!(r[2], s.kappa2.values()[i]);
        }
    }
}
