use nlhomog::cell::*;
use nlhomog::model::*;
use proptest::prelude::*;

fn sinusoid_problem(n: usize) -> CellProblem {
    CellProblem {
        kernel: KernelSpec::gaussian(1, 0.3).unwrap(),
        lambda: Coefficient::constant(1.0),
        mu: Coefficient::sinusoid(1.0, 0.5),
        n,
    }
}

fn solve(p: &CellProblem, backend: Backend) -> CellSolution {
    let opts = CellOptions {
        solver: SolverOptions { backend, ..Default::default() },
        refinement_check: false,
        ..Default::default()
    };
    solve_cell_problem(p, &opts).unwrap()
}

#[test]
fn theta_formulas_agree_in_one_dimension() {
    let s = solve(&sinusoid_problem(128), Backend::Auto);
    let rel = relative_difference(&s.theta_dirichlet, &symmetric_part(&s.theta));
    assert!(rel < 1e-8, "{rel}");
    assert!(s.diagnostics.pd_margin > 0.0);
    // a heterogeneous medium is slower than the harmonic-type bound ½⟨μ⟩M₂
    assert!(s.theta[0][0] < 0.5 * 0.09);
    assert!(s.diagnostics.solvability_second.iter().all(|r| *r < 1e-8));
}

#[test]
fn theta_formulas_agree_in_two_dimensions() {
    let p = CellProblem {
        kernel: KernelSpec::gaussian(2, 0.3).unwrap(),
        lambda: Coefficient::constant(1.0),
        mu: Coefficient::sinusoid(1.0, 0.5),
        n: 64,
    };
    let s = solve(&p, Backend::Auto);
    assert_eq!(s.diagnostics.backend, Backend::DeflatedNeumann);
    let rel = relative_difference(&s.theta_dirichlet, &symmetric_part(&s.theta));
    assert!(rel < 1e-8, "{rel}");
    assert!(min_sym_eigenvalue(&s.theta) > 0.0);
    // μ varies only along the first axis
    assert!(s.theta[0][1].abs() < 1e-10);
    assert!(s.theta[0][0] < s.theta[1][1]);
}

#[test]
fn second_corrector_backends_agree() {
    let p = sinusoid_problem(128);
    let a = solve(&p, Backend::Direct);
    let b = solve(&p, Backend::DeflatedNeumann);
    for (x, y) in a.kappa2.values().iter().zip(b.kappa2.values()) {
        assert!((x - y).abs() < 1e-8);
    }
    assert!(a.diagnostics.residual_second.iter().all(|r| *r < 1e-9));
    assert!(a.kappa2.mean()[0].abs() < 1e-14);
    assert!(a.kappa1.mean()[0].abs() < 1e-14);
}

#[test]
fn swap_symmetry_of_folded_forms() {
    let grid = TorusGrid::new(1, 32).unwrap();
    let folded = fold_kernel(&KernelSpec::gaussian(1, 0.35).unwrap(), grid, DEFAULT_TAIL_TOL).unwrap();
    let lam = Coefficient::sinusoid(2.0, 0.7).sample(grid, FieldRole::Lambda);
    let mu = Coefficient::Fourier {
        mean: 1.5,
        terms: vec![FourierTerm { amplitude: 0.4, wavevector: vec![3], phase: 0.2 }],
    }
    .sample(grid, FieldRole::Mu);
    let form = |kern: &[f64], u: &[f64], v: &[f64]| -> f64 {
        let mut s = 0.0;
        for a in 0..32 {
            for b in 0..32 {
                s += kern[grid.diff_index(a, b)] * u[b] * v[a];
            }
        }
        s
    };
    let (l, m) = (lam.values(), mu.values());
    let even = (form(&folded.a_hat, m, l), form(&folded.a_hat, l, m));
    assert!((even.0 - even.1).abs() < 1e-12 * even.0.abs());
    let odd = (form(&folded.b_hat[0], m, l), form(&folded.b_hat[0], l, m));
    assert!((odd.0 + odd.1).abs() < 1e-12 * odd.0.abs().max(1.0));
}

#[test]
fn theta_invariant_under_corrector_shift() {
    let p = sinusoid_problem(64);
    let s = solve(&p, Backend::Direct);
    let setup = setup_cell(&p, 64, DEFAULT_TAIL_TOL).unwrap();
    let mut shifted = s.kappa1.clone();
    shifted.components[0].iter_mut().for_each(|v| *v += 0.37);
    let (t, _) = compute_theta(&shifted, &setup.folded, &setup.lambda, &setup.mu).unwrap();
    assert!((t[0][0] - s.theta[0][0]).abs() < 1e-13);
}

#[test]
fn scaling_kernel_scales_theta_only() {
    let p = sinusoid_problem(64);
    let s = solve(&p, Backend::Direct);
    let scale = 2.5;
    let setup = setup_cell(&p, 64, DEFAULT_TAIL_TOL).unwrap();
    let mut folded = setup.folded.clone();
    folded.a_hat.iter_mut().for_each(|v| *v *= scale);
    folded.b_hat.iter_mut().flatten().for_each(|v| *v *= scale);
    folded.c_hat.iter_mut().flatten().for_each(|v| *v *= scale);
    let op = assemble_cell_operator(&folded, &setup.mu).unwrap();
    let f = first_order_rhs(&folded.b_hat_field(), &setup.mu).unwrap();
    let k = solve_corrector1(&op, &f, &setup.mu, &SolverOptions::default()).unwrap();
    for (a, b) in k.field.values().iter().zip(s.kappa1.values()) {
        assert!((a - b).abs() < 1e-12);
    }
    let (t, _) = compute_theta(&k.field, &folded, &setup.lambda, &setup.mu).unwrap();
    assert!((t[0][0] - scale * s.theta[0][0]).abs() < 1e-12);
}

#[test]
fn json_contains_theta_and_diagnostics() {
    let s = solve(&sinusoid_problem(32), Backend::Auto);
    let v = s.to_json(true);
    assert_eq!(v["theta"][0][0].as_f64().unwrap(), s.theta[0][0]);
    assert_eq!(v["diagnostics"]["backend"], "direct");
    assert_eq!(v["kappa1"][0].as_array().unwrap().len(), 32);
    assert!(s.to_json(false).get("kappa1").is_none());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn theta_positive_and_cross_consistent(amp in 0.0f64..0.8, lam_amp in 0.0f64..0.8, sigma in 0.15f64..0.5, k in 1i32..3) {
        let p = CellProblem {
            kernel: KernelSpec::gaussian(1, sigma).unwrap(),
            lambda: Coefficient::Sinusoid { mean: 1.0, amplitude: lam_amp, wavevector: Some(vec![k]), phase: 0.4 },
            mu: Coefficient::sinusoid(1.0, amp),
            n: 64,
        };
        let s = solve(&p, Backend::Auto);
        prop_assert!(s.diagnostics.pd_margin > 0.0);
        prop_assert!(s.diagnostics.theta_cross_relative < 1e-8);
        // never faster than the homogeneous medium with the largest coefficients
        prop_assert!(s.theta[0][0] <= 0.5 * (1.0 + lam_amp) * (1.0 + amp) * sigma * sigma);
    }
}
