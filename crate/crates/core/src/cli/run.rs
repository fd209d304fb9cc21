//! Command execution: stages, verdicts and exit status.

use std::fmt::Write as _;

use serde_json::{json, Value};

use super::config::{Command, RunConfig};
use super::report::ReportBundle;
use super::svg::{Plot, Series};
use crate::cell::{relative_difference, solve_cell_problem, CellSolution, Matrix};
use crate::error::Result;
use crate::homog::{resolvent_convergence_study, semigroup_study, StudyResult};
use crate::process::{expected_events, invariance_stats, kurtosis_trend, rescaled_ensemble, EnsembleStats, JumpProcess, BAND};
use crate::verdict::Verdict;

/// `‖sym Θ − Θ_I‖/‖Θ_I‖` accepted by the cell stage.
pub const THETA_CROSS_TOL: f64 = 1e-8;
/// Corrector residual accepted by the corrector stage.
pub const RESIDUAL_TOL: f64 = 1e-8;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Default)]
struct Context {
    /// Cell solution on the `numeric.n` grid.
    main: Option<CellSolution>,
    /// Cell solution on the `numeric.n_cell` grid used by the deterministic studies.
    study: Option<CellSolution>,
}

impl Context {
    fn study_cell(&mut self, cfg: &RunConfig, bundle: &mut ReportBundle) -> Result<&CellSolution> {
        if self.study.is_none() {
            let problem = cfg.study_problem()?;
            bundle.log(format!("cell solve on the study grid n_cell={}", cfg.numeric.n_cell));
            self.study = Some(problem.cell_solution(&cfg.cell_options())?);
        }
        Ok(self.study.as_ref().unwrap())
    }
}

fn theta_stage(cfg: &RunConfig, bundle: &mut ReportBundle, ctx: &mut Context) -> Result<()> {
    bundle.log(format!("cell solve n={}", cfg.numeric.n));
    let sol = solve_cell_problem(&cfg.cell_problem(cfg.numeric.n)?, &cfg.cell_options())?;
    let d = &sol.diagnostics;
    let mut value = sol.to_json(false);
    if cfg.problem.lambda.is_constant() && cfg.problem.mu.is_constant() {
        // κ₁ = 0 and Θ = ½λ₀μ₀M₂
        let m = cfg.kernel()?.moments()?;
        let scale = 0.5 * cfg.problem.lambda.bounds().0 * cfg.problem.mu.bounds().0;
        let dim = cfg.problem.dim;
        let closed: Matrix = (0..dim).map(|i| (0..dim).map(|j| scale * m.m2(i, j)).collect()).collect();
        value["theta_closed_form"] = json!(closed);
    }
    let solv_ok = d.solvability_first.iter().all(|r| *r < cfg.numeric.solvability_tol);
    let verdicts = vec![
        Verdict::new("theta_positive_definite", d.pd_margin > 0.0, format!("min eigenvalue of sym(theta) {:.6e}", d.pd_margin)),
        Verdict::new(
            "theta_cross_formula",
            d.theta_cross_relative < THETA_CROSS_TOL,
            format!("relative difference {:.3e} (tolerance {THETA_CROSS_TOL:.0e})", d.theta_cross_relative),
        ),
        Verdict::new("first_order_solvability", solv_ok, format!("{:?}", d.solvability_first)),
    ];
    bundle.stage("theta", value, verdicts, d.warnings.clone());
    let mut csv = String::from("i,j,theta,theta_tilde,theta_dirichlet\n");
    for i in 0..sol.theta.len() {
        for j in 0..sol.theta.len() {
            let _ = writeln!(
                csv,
                "{},{},{:.16e},{:.16e},{:.16e}",
                i + 1,
                j + 1,
                sol.theta[i][j],
                sol.theta_tilde[i][j],
                sol.theta_dirichlet[i][j]
            );
        }
    }
    bundle.file("theta.csv", csv);
    ctx.main = Some(sol);
    Ok(())
}

fn correctors_stage(cfg: &RunConfig, bundle: &mut ReportBundle, ctx: &mut Context) -> Result<()> {
    let sol = ctx.main.as_ref().expect("theta stage runs first");
    let d = &sol.diagnostics;
    let k1 = sol.kappa1.max_abs();
    let k2 = sol.kappa2.max_abs();
    let tol = RESIDUAL_TOL.max(10.0 * cfg.numeric.rel_tol);
    let res_max = d.residual_first.iter().chain(&d.residual_second).fold(0.0_f64, |m, r| m.max(*r));
    let value = json!({
        "kappa1_max_abs": k1,
        "kappa2_max_abs": k2,
        "kappa1_identically_zero": k1 < 1e-12,
        "kappa1_mean": sol.kappa1.mean(),
        "kappa2_mean": sol.kappa2.mean(),
        "residual_first": d.residual_first,
        "residual_second": d.residual_second,
        "solvability_second": d.solvability_second,
        "backend": d.backend,
        "iterations": d.iterations,
        "contraction": d.contraction,
    });
    let solv_ok = d.solvability_second.iter().all(|r| *r < cfg.numeric.solvability_tol);
    let verdicts = vec![
        Verdict::new("corrector_residuals", res_max < tol, format!("max residual {res_max:.3e} (tolerance {tol:.0e})")),
        Verdict::new("second_order_solvability", solv_ok, format!("{:?}", d.solvability_second)),
    ];
    bundle.stage("correctors", value, verdicts, Vec::new());
    bundle.file("correctors.csv", sol.fields_csv());
    Ok(())
}

fn study_json(r: &StudyResult, main: Option<&CellSolution>) -> Value {
    let mut v = json!({
        "eps": r.eps,
        "error_l2": r.error_l2,
        "error_sup": r.error_sup,
        "theta": r.theta,
    });
    if !r.phi_norm.is_empty() {
        v["phi_norm"] = json!(r.phi_norm);
    }
    if !r.mass_drift.is_empty() {
        v["mass_drift"] = json!(r.mass_drift);
    }
    if let Some(m) = main {
        v["theta_relative_difference_to_theta_stage"] = json!(relative_difference(&r.theta, &m.theta));
    }
    v
}

fn error_plot(title: &str, r: &StudyResult) -> String {
    let mut series = vec![Series::line("L2 error", r.eps.iter().copied().zip(r.error_l2.iter().copied()).collect())];
    series.push(Series::line("sup error", r.eps.iter().copied().zip(r.error_sup.iter().copied()).collect()));
    if !r.phi_norm.is_empty() {
        series.push(Series::line("main-lemma residual", r.eps.iter().copied().zip(r.phi_norm.iter().copied()).collect()));
    }
    // slope-one guide through the first L2 point
    if let (Some(e0), Some(v0)) = (r.eps.first(), r.error_l2.first()) {
        let guide = r.eps.iter().map(|e| (*e, v0 * e / e0)).collect();
        series.push(Series { name: "slope 1".into(), points: guide, errors: None, dashed: true });
    }
    Plot { title: title.into(), x_label: "eps".into(), y_label: "error".into(), log_x: true, log_y: true, series }.render()
}

fn resolvent_stage(cfg: &RunConfig, bundle: &mut ReportBundle, ctx: &mut Context) -> Result<()> {
    let problem = cfg.study_problem()?;
    let cell = ctx.study_cell(cfg, bundle)?.clone();
    bundle.log(format!("resolvent study eps={:?} m={}", cfg.numeric.eps, cfg.numeric.m_shift));
    let r = resolvent_convergence_study(&problem, &cell, &cfg.numeric.eps, cfg.numeric.m_shift)?;
    bundle.log(format!("resolvent runtimes {:?}", r.runtimes));
    let value = study_json(&r, ctx.main.as_ref());
    bundle.stage("resolvent", value, r.verdicts.clone(), cell.diagnostics.warnings.clone());
    bundle.file("resolvent.csv", r.to_csv());
    bundle.file("resolvent.svg", error_plot("resolvent convergence", &r));
    Ok(())
}

fn semigroup_stage(cfg: &RunConfig, bundle: &mut ReportBundle, ctx: &mut Context) -> Result<()> {
    let problem = cfg.study_problem()?;
    let theta = ctx.study_cell(cfg, bundle)?.theta.clone();
    bundle.log(format!("semigroup study eps={:?} times={:?}", cfg.numeric.eps, cfg.numeric.times));
    let r = semigroup_study(&problem, &theta, &cfg.numeric.times, &cfg.numeric.eps)?;
    bundle.log(format!("semigroup runtimes {:?}", r.runtimes));
    let value = study_json(&r, ctx.main.as_ref());
    bundle.stage("semigroup", value, r.verdicts.clone(), Vec::new());
    bundle.file("semigroup.csv", r.to_csv());
    bundle.file("semigroup.svg", error_plot("semigroup convergence", &r));
    Ok(())
}

fn stats_csv(all: &[EnsembleStats]) -> (String, String) {
    let mut cov = String::from("eps,t,i,j,covariance,target,se,z\n");
    let mut mom = String::from("eps,t,i,mean,se_mean,corrected_offset,excess_kurtosis,se_kurtosis\n");
    for st in all {
        for (k, t) in st.times.iter().enumerate() {
            for i in 0..st.dim {
                for j in 0..st.dim {
                    let _ = writeln!(
                        cov,
                        "{:.16e},{:.16e},{},{},{:.16e},{:.16e},{:.16e},{:.16e}",
                        st.eps,
                        t,
                        i + 1,
                        j + 1,
                        st.covariance[k][i][j],
                        st.target_covariance[k][i][j],
                        st.se_covariance[k][i][j],
                        st.z_covariance[k][i][j]
                    );
                }
                let offset = match (&st.corrected_mean, &st.corrected_target) {
                    (Some(m), Some(c)) => m[k][i] - c[i],
                    _ => st.mean[k][i],
                };
                let _ = writeln!(
                    mom,
                    "{:.16e},{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                    st.eps,
                    t,
                    i + 1,
                    st.mean[k][i],
                    st.se_mean[k][i],
                    offset,
                    st.excess_kurtosis[k][i],
                    st.se_kurtosis[k][i]
                );
            }
        }
    }
    (cov, mom)
}

fn covariance_plot(all: &[EnsembleStats], theta: &Matrix) -> String {
    let mut series = Vec::new();
    for st in all {
        let pts = st.times.iter().enumerate().map(|(k, t)| (*t, st.covariance[k][0][0])).collect();
        let errs = (0..st.times.len()).map(|k| BAND * st.se_covariance[k][0][0]).collect();
        series.push(Series { name: format!("eps={}", st.eps), points: pts, errors: Some(errs), dashed: false });
    }
    let t_max = all.iter().flat_map(|s| s.times.iter().copied()).fold(0.0_f64, f64::max);
    series.push(Series {
        name: "2 theta t".into(),
        points: vec![(0.0, 0.0), (t_max, 2.0 * theta[0][0] * t_max)],
        errors: None,
        dashed: true,
    });
    Plot {
        title: "variance of X_eps(t) against 2 theta t (3 se bars)".into(),
        x_label: "t".into(),
        y_label: "variance (first component)".into(),
        log_x: false,
        log_y: false,
        series,
    }
    .render()
}

fn simulate_stage(cfg: &RunConfig, bundle: &mut ReportBundle, ctx: &mut Context) -> Result<()> {
    let sol = ctx.main.as_ref().expect("theta stage runs first");
    let pcfg = cfg.process_config()?;
    let process = JumpProcess::new(&pcfg)?;
    let n = cfg.numeric.paths;
    let times = &cfg.numeric.sim_times;
    let mut eps_list = cfg.numeric.sim_eps.clone();
    eps_list.sort_by(|a, b| b.total_cmp(a));
    let mut all = Vec::new();
    let mut per_eps = Vec::new();
    let mut verdicts = Vec::new();
    let smallest = *eps_list.last().unwrap();
    for &eps in &eps_list {
        let horizon = *times.last().unwrap();
        bundle.log(format!(
            "simulate eps={eps} N={n} expected events {:.3e}",
            expected_events(&process, eps, horizon, n)
        ));
        let batch = rescaled_ensemble(eps, times, n, &pcfg)?;
        let (st, v) = invariance_stats(&batch, &sol.theta, Some(&sol.kappa1))?;
        per_eps.push(json!({
            "eps": eps,
            "mean_jumps": batch.mean_jumps(),
            "verdicts": v,
            "stats": st,
        }));
        if eps == smallest {
            verdicts.extend(v);
        }
        if let Some(csv) = batch.paths_csv() {
            bundle.file(&format!("paths_eps{eps}.csv"), csv);
        }
        all.push(st);
    }
    let last = all[0].times.len() - 1;
    if all.len() > 1 {
        verdicts.push(kurtosis_trend(&all, last));
    }
    let value = json!({
        "theta": sol.theta,
        "paths": n,
        "seed": cfg.numeric.seed,
        "band_standard_errors": BAND,
        "verdict_eps": smallest,
        "ensembles": per_eps,
    });
    bundle.stage("simulate", value, verdicts, Vec::new());
    let (cov, mom) = stats_csv(&all);
    bundle.file("simulate_covariance.csv", cov);
    bundle.file("simulate_moments.csv", mom);
    bundle.file("simulate_covariance.svg", covariance_plot(&all, &sol.theta));
    Ok(())
}

fn execute(command: Command, cfg: &RunConfig, bundle: &mut ReportBundle) -> Result<()> {
    let mut ctx = Context::default();
    match command {
        Command::Theta => theta_stage(cfg, bundle, &mut ctx),
        Command::Correctors => {
            theta_stage(cfg, bundle, &mut ctx)?;
            correctors_stage(cfg, bundle, &mut ctx)
        }
        Command::ResolventStudy => resolvent_stage(cfg, bundle, &mut ctx),
        Command::SemigroupStudy => semigroup_stage(cfg, bundle, &mut ctx),
        Command::Simulate => {
            theta_stage(cfg, bundle, &mut ctx)?;
            simulate_stage(cfg, bundle, &mut ctx)
        }
        Command::FullReport => {
            theta_stage(cfg, bundle, &mut ctx)?;
            correctors_stage(cfg, bundle, &mut ctx)?;
            resolvent_stage(cfg, bundle, &mut ctx)?;
            semigroup_stage(cfg, bundle, &mut ctx)?;
            simulate_stage(cfg, bundle, &mut ctx)
        }
    }
}

/// Runs `command`; a numerical error halts the chain and is recorded in the bundle.
pub fn run(command: Command, cfg: &RunConfig) -> ReportBundle {
    let mut bundle = ReportBundle::new(command.name(), cfg);
    if let Err(e) = execute(command, cfg, &mut bundle) {
        bundle.log(format!("error: {e}"));
        bundle.error = Some(e.to_string());
    }
    bundle
}

/// `0` all verdicts pass, `1` some verdict fails, `2` the run hit an error.
pub fn exit_code(bundle: &ReportBundle) -> i32 {
    if bundle.error.is_some() {
        EXIT_ERROR
    } else if bundle.passed() {
        EXIT_PASS
    } else {
        EXIT_FAIL
    }
}
