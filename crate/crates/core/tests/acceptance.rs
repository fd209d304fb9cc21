//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nlhomog::cell::*;
use nlhomog::homog::*;
use nlhomog::model::*;
use nlhomog::process::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const THETA_CONSTANT_TOL: f64 = 1e-6;
const SOLVABILITY_TOL: f64 = 1e-9;
const CROSS_TOL: f64 = 1e-8;
const BACKEND_TOL: f64 = 1e-8;
const ASYMMETRY_TOL: f64 = 1e-10;
const RESOLVENT_FINAL_RATIO: f64 = 1.0 / 3.0;
const HEAT_TOL: f64 = 1e-6;
const MASS_DRIFT_TOL: f64 = 1e-8;
const BAND_SE: f64 = 3.0;
const PATHS: usize = 100_000;

const BUDGET_1: Duration = Duration::from_secs(5);
const BUDGET_2: Duration = Duration::from_secs(10);
const BUDGET_3: Duration = Duration::from_secs(60);
const BUDGET_5: Duration = Duration::from_secs(30);
const BUDGET_6: Duration = Duration::from_secs(10);
const BUDGET_7: Duration = Duration::from_secs(300);
const BUDGET_9: Duration = Duration::from_secs(300);
const BUDGET_10: Duration = Duration::from_secs(600);
const BUDGET_11: Duration = Duration::from_secs(120);
const BUDGET_12: Duration = Duration::from_secs(600);

const STUDY_EPS: [f64; 4] = [0.4, 0.2, 0.1, 0.05];

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

struct Report {
    failures: usize,
}

impl Report {
    fn record(&mut self, id: u32, name: &str, elapsed: Duration, budget: Duration, o: Outcome) {
        let in_time = elapsed <= budget;
        let passed = o.passed && in_time;
        if !passed {
            self.failures += 1;
        }
        println!(
            "{} criterion {id:>2} {name}: {} [{:.2}s of {}s{}]",
            if passed { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64(),
            budget.as_secs(),
            if in_time { "" } else { ", over budget" }
        );
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let v = f();
    (v, start.elapsed())
}

fn options(backend: Backend) -> CellOptions {
    CellOptions {
        solver: SolverOptions { backend, ..Default::default() },
        refinement_check: false,
        ..Default::default()
    }
}

fn sinusoid_cell(dim: usize, n: usize) -> CellProblem {
    CellProblem {
        kernel: KernelSpec::gaussian(dim, 0.3).unwrap(),
        lambda: Coefficient::constant(1.0),
        mu: Coefficient::sinusoid(1.0, 0.5),
        n,
    }
}

fn study_problem(mu: Coefficient) -> StudyProblem {
    StudyProblem {
        cell: CellProblem { kernel: KernelSpec::gaussian(1, 0.3).unwrap(), lambda: Coefficient::constant(1.0), mu, n: 16 },
        half_width: 10.0,
        source: Source { amplitude: 1.0, width: 1.0 },
    }
}

fn random_fourier(rng: &mut ChaCha8Rng, mean: f64) -> Coefficient {
    let terms = (0..3)
        .map(|_| FourierTerm {
            amplitude: rng.random_range(-0.3..0.3),
            wavevector: vec![rng.random_range(1..5)],
            phase: rng.random_range(0.0..std::f64::consts::TAU),
        })
        .collect();
    Coefficient::Fourier { mean, terms }
}

fn list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn criterion_1() -> Outcome {
    let p = CellProblem {
        kernel: KernelSpec::gaussian(1, 1.0).unwrap(),
        lambda: Coefficient::constant(2.0),
        mu: Coefficient::constant(3.0),
        n: 128,
    };
    // Θ = ½λμM₂ = 3
    let s = solve_cell_problem(&p, &options(Backend::Auto)).unwrap();
    let err = (s.theta[0][0] - 3.0).abs();
    outcome(err < THETA_CONSTANT_TOL, format!("theta {:.12}, |theta - 3| = {err:.2e} < {THETA_CONSTANT_TOL:.0e}", s.theta[0][0]))
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let kernel = KernelSpec::gaussian(1, 0.3).unwrap();
    let mut worst = 0.0_f64;
    for _ in 0..10 {
        let p = CellProblem { kernel: kernel.clone(), lambda: random_fourier(&mut rng, 1.0), mu: random_fourier(&mut rng, 1.5), n: 128 };
        let setup = setup_cell(&p, p.n, DEFAULT_TAIL_TOL).unwrap();
        let f = first_order_rhs(&setup.folded.b_hat_field(), &setup.mu).unwrap();
        let inner = check_solvability(&f, &setup.mu).unwrap()[0];
        let scale = grid_norm(setup.grid, &f.components[0]) * grid_norm(setup.grid, setup.mu.values());
        worst = worst.max(inner / scale);
    }
    outcome(worst < SOLVABILITY_TOL, format!("10 random media, max |<f,mu>|/(|f||mu|) = {worst:.2e} < {SOLVABILITY_TOL:.0e}"))
}

fn criterion_3(solutions: &[CellSolution]) -> Outcome {
    let rel: Vec<f64> =
        solutions.iter().map(|s| relative_difference(&s.theta_dirichlet, &symmetric_part(&s.theta))).collect();
    outcome(
        rel.iter().all(|r| *r < CROSS_TOL),
        format!("relative gap d=1 n=128 {:.2e}, d=2 n=64 {:.2e} < {CROSS_TOL:.0e}", rel[0], rel[1]),
    )
}

fn criterion_4(solutions: &[CellSolution]) -> Outcome {
    let eig: Vec<f64> = solutions.iter().map(|s| min_sym_eigenvalue(&s.theta)).collect();
    outcome(eig.iter().all(|e| *e > 0.0), format!("smallest eigenvalue of sym(theta) d=1 {:.4e}, d=2 {:.4e} > 0", eig[0], eig[1]))
}

fn criterion_5() -> Outcome {
    let p = sinusoid_cell(1, 256);
    let direct = solve_cell_problem(&p, &options(Backend::Direct)).unwrap();
    let deflated = solve_cell_problem(&p, &options(Backend::DeflatedNeumann)).unwrap();
    let gap = direct
        .kappa1
        .values()
        .iter()
        .zip(deflated.kappa1.values())
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    let q = deflated.diagnostics.contraction.unwrap_or(f64::INFINITY);
    outcome(gap < BACKEND_TOL && q < 1.0, format!("max |kappa1 direct - deflated| = {gap:.2e} < {BACKEND_TOL:.0e}, contraction {q:.4} < 1"))
}

fn criterion_6() -> Outcome {
    let p = study_problem(Coefficient::sinusoid(1.0, 0.5));
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut rows_exact, mut asym, mut max_form) = (true, 0.0_f64, f64::NEG_INFINITY);
    for e in [0.25, 0.1] {
        let op = p.assemble(e).unwrap();
        rows_exact &= op.apply(&vec![1.0; op.grid.len()]).iter().all(|v| *v == 0.0);
        asym = asym.max(op.weighted_asymmetry());
        for _ in 0..100 {
            let u: Vec<f64> = (0..op.grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            max_form = max_form.max(op.weighted_form(&u));
        }
    }
    outcome(
        rows_exact && asym < ASYMMETRY_TOL && max_form <= 0.0,
        format!("zero row sums {rows_exact}, weighted asymmetry {asym:.2e} < {ASYMMETRY_TOL:.0e}, max <Lu,u>_nu {max_form:.3e} <= 0"),
    )
}

fn criterion_7(r: &StudyResult) -> Outcome {
    let e = &r.error_l2;
    let ratio = e[e.len() - 1] / e[0];
    outcome(
        strictly_decreasing(e) && ratio < RESOLVENT_FINAL_RATIO,
        format!("L2 errors {}, final/initial {ratio:.3} < 1/3", list(e)),
    )
}

fn criterion_8(r: &StudyResult) -> Outcome {
    outcome(strictly_decreasing(&r.phi_norm), format!("residual norms {} strictly decreasing", list(&r.phi_norm)))
}

fn criterion_9() -> Outcome {
    let p = study_problem(Coefficient::sinusoid(1.0, 0.5));
    let cell = p.cell_solution(&CellOptions::default()).unwrap();
    let r = semigroup_study(&p, &cell.theta, &[0.25, 0.5, 1.0], &STUDY_EPS).unwrap();
    let drift = r.mass_drift.iter().cloned().fold(0.0_f64, f64::max);

    let c = study_problem(Coefficient::constant(1.0));
    let theta = vec![vec![0.5 * 0.09]];
    let grid = c.grid_for(0.1).unwrap();
    let spec = BoxSpectral::new(grid).unwrap();
    let t = 1.0;
    // Gaussian source of unit width spreads to variance 1 + 2Θt
    let v: f64 = 1.0 + 2.0 * theta[0][0] * t;
    let exact = grid.sample(|x| (1.0 / v).sqrt() * (-x[0] * x[0] / (2.0 * v)).exp());
    let heat = spec.heat(&theta, t, &c.source.sample(&grid));
    let heat_err = heat.iter().zip(&exact).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));

    outcome(
        strictly_decreasing(&r.error_l2) && heat_err < HEAT_TOL && drift < MASS_DRIFT_TOL,
        format!(
            "sup_t L2 errors {}, heat closed form {heat_err:.2e} < {HEAT_TOL:.0e}, mass drift {drift:.2e} < {MASS_DRIFT_TOL:.0e}",
            list(&r.error_l2)
        ),
    )
}

fn criterion_10() -> Outcome {
    let cell = solve_cell_problem(&sinusoid_cell(1, 128), &options(Backend::Auto)).unwrap();
    let cfg = ProcessConfig::new(KernelSpec::gaussian(1, 0.3).unwrap(), Coefficient::constant(1.0), Coefficient::sinusoid(1.0, 0.5))
        .with_seed(10);
    let mut all = Vec::new();
    for eps in [0.5, 0.2, 0.05] {
        let b = rescaled_ensemble(eps, &[0.5, 1.0], PATHS, &cfg).unwrap();
        all.push(ensemble_stats(&b, &cell.theta, Some(&cell.kappa1)).unwrap());
    }
    let last = all.last().unwrap();
    let (var, se, target) = (last.covariance[1][0][0], last.se_covariance[1][0][0], last.target_covariance[1][0][0]);
    let z = (var - target) / se;
    let trend = kurtosis_trend(&all, 1);
    let kurt: Vec<f64> = all.iter().map(|s| s.excess_kurtosis[1][0]).collect();
    outcome(
        z.abs() < BAND_SE && trend.passed,
        format!("eps=0.05 Var X(1) {var:.6} vs 2 theta {target:.6}, z = {z:.2} within {BAND_SE} se; excess kurtosis {kurt:.4?} decreasing"),
    )
}

fn criterion_11() -> Outcome {
    let cfg = ProcessConfig::new(KernelSpec::gaussian(1, 1.0).unwrap(), Coefficient::constant(1.0), Coefficient::constant(1.0))
        .with_seed(11);
    let t = 10.0;
    let b = rescaled_ensemble(1.0, &[t], PATHS, &cfg).unwrap();
    let n = PATHS as f64;
    let count_gap = (b.mean_jumps() - t).abs();
    let count_band = BAND_SE * (t / n).sqrt();
    let x = b.component(0, 0);
    let m = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    let se = t * (2.0 / n).sqrt();
    outcome(
        count_gap < count_band && (var - t).abs() < BAND_SE * se,
        format!(
            "mean jumps {:.4} (band {count_band:.4}), Var X(10) {var:.4} vs 10 (band {:.4})",
            b.mean_jumps(),
            BAND_SE * se
        ),
    )
}

fn criterion_12() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join("demo.toml");
    let mut summaries = Vec::new();
    let mut codes = Vec::new();
    for name in ["first", "second"] {
        let out = tmp.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_nlhomog"))
            .arg("full-report")
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .output()
            .expect("binary runs")
            .status;
        codes.push(status.code());
        summaries.push(std::fs::read(out.join("summary.json")).unwrap_or_default());
    }
    let identical = !summaries[0].is_empty() && summaries[0] == summaries[1];
    outcome(
        identical && codes.iter().all(|c| *c == Some(0)),
        format!("exit codes {codes:?}, summary.json byte-identical {identical} ({} bytes)", summaries[0].len()),
    )
}

fn main() {
    let mut report = Report { failures: 0 };

    let (o, d) = timed(criterion_1);
    report.record(1, "constant-coefficient theta", d, BUDGET_1, o);
    let (o, d) = timed(criterion_2);
    report.record(2, "first-order solvability", d, BUDGET_2, o);

    let (solutions, d3) = timed(|| {
        let mut p2 = sinusoid_cell(2, 64);
        p2.mu = Coefficient::Fourier {
            mean: 1.0,
            terms: vec![
                FourierTerm { amplitude: 0.3, wavevector: vec![1, 0], phase: 0.0 },
                FourierTerm { amplitude: 0.2, wavevector: vec![1, 1], phase: 0.5 },
            ],
        };
        vec![
            solve_cell_problem(&sinusoid_cell(1, 128), &options(Backend::Auto)).unwrap(),
            solve_cell_problem(&p2, &options(Backend::Auto)).unwrap(),
        ]
    });
    let (o, d) = timed(|| criterion_3(&solutions));
    report.record(3, "theta cross formula", d3 + d, BUDGET_3, o);
    let (o, d) = timed(|| criterion_4(&solutions));
    report.record(4, "theta positive definite", d, BUDGET_3, o);

    let (o, d) = timed(criterion_5);
    report.record(5, "backend agreement", d, BUDGET_5, o);
    let (o, d) = timed(criterion_6);
    report.record(6, "weighted structure", d, BUDGET_6, o);

    let (study, d7) = timed(|| {
        let p = study_problem(Coefficient::sinusoid(1.0, 0.5));
        let cell = p.cell_solution(&CellOptions::default()).unwrap();
        resolvent_convergence_study(&p, &cell, &STUDY_EPS, 1.0).unwrap()
    });
    report.record(7, "resolvent convergence", d7, BUDGET_7, criterion_7(&study));
    report.record(8, "main-lemma residual", d7, BUDGET_7, criterion_8(&study));

    let (o, d) = timed(criterion_9);
    report.record(9, "semigroup convergence", d, BUDGET_9, o);
    let (o, d) = timed(criterion_10);
    report.record(10, "invariance principle", d, BUDGET_10, o);
    let (o, d) = timed(criterion_11);
    report.record(11, "compound Poisson", d, BUDGET_11, o);
    let (o, d) = timed(criterion_12);
    report.record(12, "reproducible full report", d, BUDGET_12, o);

    println!("acceptance: {} of 12 criteria passed", 12 - report.failures);
    if report.failures > 0 {
        std::process::exit(1);
    }
}
