use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::grid::{interp_periodic, FieldRole, PeriodicField, TorusGrid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierTerm {
    pub amplitude: f64,
    pub wavevector: Vec<i32>,
    #[serde(default)]
    pub phase: f64,
}

/// Periodic medium coefficient (`λ` or `μ`) on the unit torus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Coefficient {
    Constant {
        value: f64,
    },
    /// `mean + amplitude·sin(2π k·ξ + phase)`; `k` defaults to the first unit vector.
    Sinusoid {
        mean: f64,
        amplitude: f64,
        #[serde(default)]
        wavevector: Option<Vec<i32>>,
        #[serde(default)]
        phase: f64,
    },
    /// `mean + Σ amplitude·sin(2π k·ξ + phase)`.
    Fourier { mean: f64, terms: Vec<FourierTerm> },
    /// Node values on an `n^d` torus grid, periodic multilinear interpolation.
    Tabulated { n: usize, values: Vec<f64> },
}

fn dot(k: &[i32], x: &[f64]) -> f64 {
    k.iter().zip(x.iter()).map(|(&ki, &xi)| ki as f64 * xi).sum()
}

impl Coefficient {
    pub fn constant(value: f64) -> Self {
        Coefficient::Constant { value }
    }

    pub fn sinusoid(mean: f64, amplitude: f64) -> Self {
        Coefficient::Sinusoid { mean, amplitude, wavevector: None, phase: 0.0 }
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Coefficient::Constant { value } => *value,
            Coefficient::Sinusoid { mean, amplitude, wavevector, phase } => {
                let arg = match wavevector {
                    Some(k) => dot(k, x),
                    None => x[0],
                };
                mean + amplitude * (2.0 * PI * arg + phase).sin()
            }
            Coefficient::Fourier { mean, terms } => {
                mean + terms
                    .iter()
                    .map(|t| t.amplitude * (2.0 * PI * dot(&t.wavevector, x) + t.phase).sin())
                    .sum::<f64>()
            }
            Coefficient::Tabulated { n, values } => {
                let d = if values.len() == *n { 1 } else { 2 };
                interp_periodic(values, *n, d, x)
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Coefficient::Constant { .. } => true,
            Coefficient::Sinusoid { amplitude, .. } => *amplitude == 0.0,
            Coefficient::Fourier { terms, .. } => terms.iter().all(|t| t.amplitude == 0.0),
            Coefficient::Tabulated { values, .. } => values.windows(2).all(|w| w[0] == w[1]),
        }
    }

    /// Rigorous `(inf, sup)` over the torus.
    pub fn bounds(&self) -> (f64, f64) {
        match self {
            Coefficient::Constant { value } => (*value, *value),
            Coefficient::Sinusoid { mean, amplitude, .. } => (mean - amplitude.abs(), mean + amplitude.abs()),
            Coefficient::Fourier { mean, terms } => {
                let s: f64 = terms.iter().map(|t| t.amplitude.abs()).sum();
                (mean - s, mean + s)
            }
            Coefficient::Tabulated { values, .. } => (
                values.iter().cloned().fold(f64::INFINITY, f64::min),
                values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            ),
        }
    }

    pub fn check(&self, dim: usize, name: &str) -> Result<()> {
        if let Coefficient::Tabulated { n, values } = self {
            if *n < 4 || values.len() != n.pow(dim as u32) {
                return Err(Error::Config(format!(
                    "{name}: tabulated field needs n >= 4 and n^d = {} values, got {}",
                    n.pow(dim as u32),
                    values.len()
                )));
            }
        }
        let (lo, hi) = self.bounds();
        if !(lo.is_finite() && hi.is_finite()) || lo <= 0.0 {
            return Err(Error::CoefficientBounds { name: name.to_string(), node: 0, value: lo });
        }
        Ok(())
    }

    pub fn sample(&self, grid: TorusGrid, role: FieldRole) -> PeriodicField {
        if let Coefficient::Tabulated { n, values } = self {
            if *n == grid.n() && values.len() == grid.len() {
                return PeriodicField::scalar(grid, role, values.clone());
            }
        }
        PeriodicField::from_fn(grid, role, |x| self.eval(x))
    }
}

/// Observed `(α₁, α₂)` over both fields; fails when any node value is not positive.
pub fn validate_coefficients(lambda: &PeriodicField, mu: &PeriodicField) -> Result<(f64, f64)> {
    lambda.grid.same_as(&mu.grid, "validate_coefficients")?;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (name, field) in [("lambda", lambda), ("mu", mu)] {
        for (node, &v) in field.values().iter().enumerate() {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::CoefficientBounds { name: name.to_string(), node, value: v });
            }
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    Ok((lo, hi))
}
