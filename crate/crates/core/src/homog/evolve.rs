//! Resolvent solves and semigroup action for the discrete `L^ε`.

use rayon::prelude::*;

use super::operator::DiscreteNonlocalOperator;
use crate::error::{Error, Result};

pub const RESOLVENT_REL_TOL: f64 = 1e-10;
const CG_MAX_ITER: usize = 50_000;

const DOT_CHUNK: usize = 4096;

/// Fixed-chunk parallel dot product, summed in chunk order so the result does not depend on scheduling.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let partial: Vec<f64> = a
        .par_chunks(DOT_CHUNK)
        .zip(b.par_chunks(DOT_CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(x, y)| x * y).sum::<f64>())
        .collect();
    partial.iter().sum()
}

/// Solves `(L^ε − m) u = f` by Jacobi-preconditioned CG on `D_ν(m − L^ε)`, which is
/// symmetric positive definite.
pub fn solve_resolvent_eps(op: &DiscreteNonlocalOperator, m_shift: f64, f: &[f64]) -> Result<Vec<f64>> {
    if !(m_shift > 0.0) {
        return Err(Error::Config(format!("spectral shift m must be positive, got {m_shift}")));
    }
    let len = f.len();
    let nu = op.nu();
    let f_norm = dot(f, f).sqrt();
    let mut u = vec![0.0; len];
    if f_norm == 0.0 {
        return Ok(u);
    }
    let apply_s = |x: &[f64]| -> Vec<f64> {
        let lx = op.apply(x);
        (0..len).map(|i| nu[i] * (m_shift * x[i] - lx[i])).collect()
    };
    let diag: Vec<f64> = op
        .off_diagonal_row_sums()
        .iter()
        .zip(nu)
        .map(|(s, n)| n * (m_shift + s))
        .collect();
    let b: Vec<f64> = f.iter().zip(nu).map(|(f, n)| -n * f).collect();
    let b_norm = dot(&b, &b).sqrt();
    let mut r = b.clone();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut target = 1e-2 * RESOLVENT_REL_TOL * b_norm;
    for _ in 0..CG_MAX_ITER {
        let sp = apply_s(&p);
        let alpha = rz / dot(&p, &sp);
        u.par_iter_mut().zip(&p).for_each(|(u, p)| *u += alpha * p);
        r.par_iter_mut().zip(&sp).for_each(|(r, s)| *r -= alpha * s);
        if dot(&r, &r).sqrt() <= target {
            let lu = op.apply(&u);
            let true_res: f64 = (0..len).map(|i| (lu[i] - m_shift * u[i] - f[i]).powi(2)).sum::<f64>().sqrt();
            if true_res <= RESOLVENT_REL_TOL * f_norm {
                return Ok(u);
            }
            target *= 0.1;
            // restart from the true residual
            r = apply_s(&u).iter().zip(&b).map(|(s, b)| b - s).collect();
            z = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
            p = z.clone();
            rz = dot(&r, &z);
            continue;
        }
        z = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut().zip(&z).for_each(|(p, z)| *p = z + beta * *p);
    }
    Err(Error::SolverBreakdown(format!("CG did not converge in {CG_MAX_ITER} iterations")))
}

/// Substep size bound `‖hL‖_∞ ≤ 1`, Taylor terms until they drop below roundoff.
#[derive(Debug, Clone)]
pub struct SemigroupStepper<'a> {
    op: &'a DiscreteNonlocalOperator,
    norm: f64,
    pub substeps: usize,
    pub taylor_terms: usize,
}

impl<'a> SemigroupStepper<'a> {
    pub fn new(op: &'a DiscreteNonlocalOperator) -> Self {
        Self { op, norm: op.inf_norm(), substeps: 0, taylor_terms: 0 }
    }

    fn taylor(&mut self, h: f64, u: &[f64]) -> Vec<f64> {
        let mut sum = u.to_vec();
        let mut term = u.to_vec();
        for k in 1..=60 {
            let lt = self.op.apply(&term);
            let c = h / k as f64;
            term = lt.into_iter().map(|v| c * v).collect();
            sum.iter_mut().zip(&term).for_each(|(s, t)| *s += t);
            self.taylor_terms += 1;
            let tn = term.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            let sn = sum.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            if tn <= 1e-17 * sn {
                break;
            }
        }
        sum
    }

    /// `exp(t L^ε) u`, failing if the weighted norm grows.
    pub fn advance(&mut self, t: f64, u: &[f64]) -> Result<Vec<f64>> {
        if t == 0.0 {
            return Ok(u.to_vec());
        }
        let steps = ((t * self.norm).ceil() as usize).max(1);
        let h = t / steps as f64;
        let grid = self.op.grid;
        let nu = self.op.nu();
        let mut cur = u.to_vec();
        let mut norm = grid.norm_weighted(&cur, nu);
        for _ in 0..steps {
            cur = self.taylor(h, &cur);
            self.substeps += 1;
            let next = grid.norm_weighted(&cur, nu);
            if next > norm * (1.0 + 1e-10) + 1e-300 {
                return Err(Error::Integrator(format!(
                    "weighted norm grew from {norm:.6e} to {next:.6e} over one step of size {h:.3e}"
                )));
            }
            norm = next;
        }
        Ok(cur)
    }
}
