//! Corrector expansion, main-lemma residual, and the resolvent and semigroup studies.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::evolve::{solve_resolvent_eps, SemigroupStepper};
use super::grid::SampleGrid;
use super::operator::{assemble_Leps, DiscreteNonlocalOperator};
use super::spectral::{BoxSpectral, LimitField};
use crate::cell::{solve_cell_problem, CellOptions, CellProblem, CellSolution, Matrix};
use crate::error::{Error, Result};
use crate::model::PeriodicField;
use crate::verdict::{all_passed, decreasing_with_ratio, Verdict};

/// Gaussian source `amplitude · exp(−|x|²/(2 width²))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Source {
    pub amplitude: f64,
    pub width: f64,
}

impl Default for Source {
    fn default() -> Self {
        Self { amplitude: 1.0, width: 1.0 }
    }
}

impl Source {
    pub fn sample(&self, grid: &SampleGrid) -> Vec<f64> {
        let w2 = 2.0 * self.width * self.width;
        grid.sample(|x| self.amplitude * (-x.iter().map(|v| v * v).sum::<f64>() / w2).exp())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyProblem {
    /// Cell problem; its `n` is the number of sample nodes per period.
    pub cell: CellProblem,
    pub half_width: f64,
    pub source: Source,
}

impl StudyProblem {
    pub fn n_cell(&self) -> usize {
        self.cell.n
    }

    pub fn grid_for(&self, eps: f64) -> Result<SampleGrid> {
        SampleGrid::for_eps(self.cell.kernel.dim(), self.half_width, eps, self.n_cell())
    }

    pub fn assemble(&self, eps: f64) -> Result<DiscreteNonlocalOperator> {
        assemble_Leps(self.grid_for(eps)?, eps, &self.cell.kernel, &self.cell.lambda, &self.cell.mu)
    }

    /// Cell solution on the sample-aligned torus grid.
    pub fn cell_solution(&self, opts: &CellOptions) -> Result<CellSolution> {
        solve_cell_problem(&self.cell, opts)
    }

    fn source_on(&self, grid: &SampleGrid) -> Result<Vec<f64>> {
        let f = self.source.sample(grid);
        let peak = SampleGrid::norm_sup(&f);
        let edge = (0..grid.len()).filter(|&k| grid.on_boundary(k)).fold(0.0_f64, |m, k| m.max(f[k].abs()));
        if edge > 1e-10 * peak.max(1.0) {
            return Err(Error::BoxTruncation(format!(
                "source is {edge:.3e} at the box boundary; enlarge R or narrow the source"
            )));
        }
        Ok(f)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyResult {
    pub kind: String,
    pub eps: Vec<f64>,
    pub error_l2: Vec<f64>,
    pub error_sup: Vec<f64>,
    /// Main-lemma residual (resolvent study only).
    pub phi_norm: Vec<f64>,
    /// Largest relative drift of `⟨u(t), ν_ε⟩` (semigroup study only).
    pub mass_drift: Vec<f64>,
    pub runtimes: Vec<f64>,
    pub config_hash: Option<String>,
    pub theta: Matrix,
    pub verdicts: Vec<Verdict>,
}

impl StudyResult {
    pub fn passed(&self) -> bool {
        all_passed(&self.verdicts)
    }

    /// `eps,error_l2,error_sup,phi_norm,runtime_s`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("eps,error_l2,error_sup,phi_norm,mass_drift,runtime_s\n");
        for k in 0..self.eps.len() {
            let opt = |v: &Vec<f64>| v.get(k).map(|x| format!("{x:.16e}")).unwrap_or_default();
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{},{},{:.6e}\n",
                self.eps[k],
                self.error_l2[k],
                self.error_sup[k],
                opt(&self.phi_norm),
                opt(&self.mass_drift),
                self.runtimes[k]
            ));
        }
        out
    }
}

/// Samples a torus field at `x/ε mod 1` by periodic linear interpolation.
fn on_box(field: &PeriodicField, c: usize, grid: &SampleGrid, eps: f64) -> Vec<f64> {
    grid.sample(|x| {
        let xi: Vec<f64> = x.iter().map(|v| v / eps).collect();
        field.interpolate(c, &xi)
    })
}

/// `v^ε = u₀ + ε κ₁(x/ε)·∇u₀ + ε² κ₂(x/ε):∇∇u₀`.
pub fn corrector_expansion(
    u0: &LimitField,
    kappa1: &PeriodicField,
    kappa2: &PeriodicField,
    eps: f64,
    grid: &SampleGrid,
) -> Vec<f64> {
    let d = grid.d;
    let mut v = u0.values.clone();
    for i in 0..d {
        let k = on_box(kappa1, i, grid, eps);
        for n in 0..v.len() {
            v[n] += eps * k[n] * u0.grad[i][n];
        }
    }
    for c in 0..d * d {
        let k = on_box(kappa2, c, grid, eps);
        for n in 0..v.len() {
            v[n] += eps * eps * k[n] * u0.hess[c][n];
        }
    }
    v
}

/// `‖L^ε v^ε − Θ:∇∇u₀‖` in the discrete `L²` norm.
pub fn main_lemma_residual(op: &DiscreteNonlocalOperator, v_eps: &[f64], theta: &Matrix, u0: &LimitField) -> f64 {
    let d = op.grid.d;
    let lv = op.apply(v_eps);
    let phi: Vec<f64> = (0..lv.len())
        .map(|n| {
            let mut t = 0.0;
            for i in 0..d {
                for j in 0..d {
                    t += theta[i][j] * u0.hess[i * d + j][n];
                }
            }
            lv[n] - t
        })
        .collect();
    op.grid.norm_l2(&phi)
}

fn fmt_list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn check_eps(eps: &[f64]) -> Result<()> {
    if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0)) || eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config(format!("eps list must be positive and strictly decreasing, got {eps:?}")));
    }
    Ok(())
}

struct ResolventPoint {
    l2: f64,
    sup: f64,
    phi: f64,
    bound_ok: bool,
    runtime: f64,
}

/// Compares `(L^ε − m)^{-1} f` with `(Θ:∇∇ − m)^{-1} f` over a decreasing `ε` list.
pub fn resolvent_convergence_study(
    problem: &StudyProblem,
    cell: &CellSolution,
    eps: &[f64],
    m_shift: f64,
) -> Result<StudyResult> {
    check_eps(eps)?;
    let theta = cell.theta.clone();
    let points: Vec<Result<ResolventPoint>> = eps
        .par_iter()
        .map(|&e| {
            let start = Instant::now();
            let op = problem.assemble(e)?;
            let grid = op.grid;
            let f = problem.source_on(&grid)?;
            let u_eps = solve_resolvent_eps(&op, m_shift, &f)?;
            let spec = BoxSpectral::new(grid)?;
            let u0 = spec.derivatives(&spec.solve_resolvent(&theta, m_shift, &f));
            let diff: Vec<f64> = u_eps.iter().zip(&u0.values).map(|(a, b)| a - b).collect();
            let v = corrector_expansion(&u0, &cell.kappa1, &cell.kappa2, e, &grid);
            let phi = main_lemma_residual(&op, &v, &theta, &u0);
            let nu = op.nu();
            let bound_ok = m_shift * grid.norm_weighted(&u_eps, nu) <= grid.norm_weighted(&f, nu) * (1.0 + 1e-9);
            Ok(ResolventPoint {
                l2: grid.norm_l2(&diff),
                sup: SampleGrid::norm_sup(&diff),
                phi,
                bound_ok,
                runtime: start.elapsed().as_secs_f64(),
            })
        })
        .collect();
    let points: Vec<ResolventPoint> = points.into_iter().collect::<Result<_>>()?;
    let error_l2: Vec<f64> = points.iter().map(|p| p.l2).collect();
    let phi_norm: Vec<f64> = points.iter().map(|p| p.phi).collect();
    let verdicts = vec![
        Verdict::new(
            "resolvent_error_decreasing",
            decreasing_with_ratio(&error_l2, 0.9),
            format!("L2 errors {}, each step must shrink below 0.9x", fmt_list(&error_l2)),
        ),
        Verdict::new(
            "main_lemma_residual_decreasing",
            decreasing_with_ratio(&phi_norm, 1.0),
            format!("residual norms {}", fmt_list(&phi_norm)),
        ),
        Verdict::new(
            "resolvent_bound",
            points.iter().all(|p| p.bound_ok),
            "m‖u‖_ν ≤ ‖f‖_ν at every eps",
        ),
    ];
    Ok(StudyResult {
        kind: "resolvent".into(),
        eps: eps.to_vec(),
        error_l2,
        error_sup: points.iter().map(|p| p.sup).collect(),
        phi_norm,
        mass_drift: Vec::new(),
        runtimes: points.iter().map(|p| p.runtime).collect(),
        config_hash: None,
        theta,
        verdicts,
    })
}

struct SemigroupPoint {
    l2: f64,
    sup: f64,
    drift: f64,
    contraction_ok: bool,
    runtime: f64,
}

/// Compares `exp(tL^ε) f` with `exp(tΘ:∇∇) f` at the given times over a decreasing `ε` list.
pub fn semigroup_study(problem: &StudyProblem, theta: &Matrix, times: &[f64], eps: &[f64]) -> Result<StudyResult> {
    check_eps(eps)?;
    if times.iter().any(|t| !(*t >= 0.0)) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config(format!("times must be nonnegative and increasing, got {times:?}")));
    }
    let points: Vec<Result<SemigroupPoint>> = eps
        .par_iter()
        .map(|&e| {
            let start = Instant::now();
            let op = problem.assemble(e)?;
            let grid = op.grid;
            let nu = op.nu();
            let f = problem.source_on(&grid)?;
            let spec = BoxSpectral::new(grid)?;
            let mass = |u: &[f64]| u.iter().zip(nu).map(|(u, n)| u * n).sum::<f64>() * grid.weight();
            let m0 = mass(&f);
            let n0 = grid.norm_weighted(&f, nu);
            let mut stepper = SemigroupStepper::new(&op);
            let mut u = f.clone();
            let mut t_prev = 0.0;
            let (mut l2, mut sup, mut drift) = (0.0_f64, 0.0_f64, 0.0_f64);
            let mut contraction_ok = true;
            for &t in times {
                u = stepper.advance(t - t_prev, &u)?;
                t_prev = t;
                let limit = spec.heat(theta, t, &f);
                let diff: Vec<f64> = u.iter().zip(&limit).map(|(a, b)| a - b).collect();
                l2 = l2.max(grid.norm_l2(&diff));
                sup = sup.max(SampleGrid::norm_sup(&diff));
                drift = drift.max((mass(&u) - m0).abs() / m0.abs().max(f64::MIN_POSITIVE));
                contraction_ok &= grid.norm_weighted(&u, nu) <= n0 * (1.0 + 1e-10);
            }
            Ok(SemigroupPoint { l2, sup, drift, contraction_ok, runtime: start.elapsed().as_secs_f64() })
        })
        .collect();
    let points: Vec<SemigroupPoint> = points.into_iter().collect::<Result<_>>()?;
    let error_l2: Vec<f64> = points.iter().map(|p| p.l2).collect();
    let mass_drift: Vec<f64> = points.iter().map(|p| p.drift).collect();
    let verdicts = vec![
        Verdict::new(
            "semigroup_error_decreasing",
            decreasing_with_ratio(&error_l2, 1.0),
            format!("sup over t of L2 errors {}", fmt_list(&error_l2)),
        ),
        Verdict::new(
            "weighted_mass_conserved",
            mass_drift.iter().all(|d| *d < 1e-8),
            format!("relative drift {}", fmt_list(&mass_drift)),
        ),
        Verdict::new("weighted_contraction", points.iter().all(|p| p.contraction_ok), "‖T(t)f‖_ν ≤ ‖f‖_ν"),
    ];
    Ok(StudyResult {
        kind: "semigroup".into(),
        eps: eps.to_vec(),
        error_l2,
        error_sup: points.iter().map(|p| p.sup).collect(),
        phi_norm: Vec::new(),
        mass_drift,
        runtimes: points.iter().map(|p| p.runtime).collect(),
        config_hash: None,
        theta: theta.clone(),
        verdicts,
    })
}
