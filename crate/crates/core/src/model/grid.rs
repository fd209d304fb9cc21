use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform tensor grid on the unit torus `[0,1)^d`, nodes `k/n` per axis.
///
/// Nodes are flattened with the first axis varying slowest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorusGrid {
    d: usize,
    n: usize,
}

impl TorusGrid {
    pub fn new(d: usize, n: usize) -> Result<Self> {
        if !(1..=2).contains(&d) {
            return Err(Error::Resolution(format!("dimension {d} not supported (1 or 2)")));
        }
        if n < 4 {
            return Err(Error::Resolution(format!("torus grid needs n >= 4, got {n}")));
        }
        Ok(Self { d, n })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Quadrature weight `h^d` attached to every node.
    pub fn weight(&self) -> f64 {
        self.spacing().powi(self.d as i32)
    }

    pub fn multi_index(&self, flat: usize) -> [usize; 2] {
        if self.d == 1 {
            [flat, 0]
        } else {
            [flat / self.n, flat % self.n]
        }
    }

    pub fn flat_index(&self, idx: [usize; 2]) -> usize {
        if self.d == 1 {
            idx[0]
        } else {
            idx[0] * self.n + idx[1]
        }
    }

    /// Node coordinates in `[0,1)^d`; unused trailing entries are zero.
    pub fn node(&self, flat: usize) -> [f64; 2] {
        let h = self.spacing();
        let m = self.multi_index(flat);
        [m[0] as f64 * h, if self.d == 2 { m[1] as f64 * h } else { 0.0 }]
    }

    /// Node coordinates wrapped to `[-1/2, 1/2)^d`.
    pub fn wrapped_node(&self, flat: usize) -> [f64; 2] {
        let h = self.spacing();
        let m = self.multi_index(flat);
        let w = |k: usize| {
            let k = k as i64;
            let n = self.n as i64;
            let s = if 2 * k >= n { k - n } else { k };
            s as f64 * h
        };
        [w(m[0]), if self.d == 2 { w(m[1]) } else { 0.0 }]
    }

    /// Flat index of the node `ξ_a − ξ_b (mod 1)`.
    #[inline]
    pub fn diff_index(&self, a: usize, b: usize) -> usize {
        let n = self.n;
        if self.d == 1 {
            (a + n - b) % n
        } else {
            let (a0, a1) = (a / n, a % n);
            let (b0, b1) = (b / n, b % n);
            ((a0 + n - b0) % n) * n + (a1 + n - b1) % n
        }
    }

    /// Flat index of `−ξ_a (mod 1)`.
    #[inline]
    pub fn neg_index(&self, a: usize) -> usize {
        let n = self.n;
        if self.d == 1 {
            (n - a) % n
        } else {
            let (a0, a1) = (a / n, a % n);
            ((n - a0) % n) * n + (n - a1) % n
        }
    }

    pub fn same_as(&self, other: &TorusGrid, what: &str) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!(
                "{what}: grid (d={}, n={}) vs (d={}, n={})",
                self.d, self.n, other.d, other.n
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldRole {
    Lambda,
    Mu,
    Nu,
    Corrector1,
    Corrector2,
    FoldedKernel,
    Other,
}

/// A periodic (possibly vector or matrix valued) function tabulated on a torus grid.
///
/// `components[c][node]`; scalar fields have one component, vector fields `d`,
/// matrix fields `d*d` in row-major `(i, j)` order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeriodicField {
    pub grid: TorusGrid,
    pub role: FieldRole,
    pub components: Vec<Vec<f64>>,
}

impl PeriodicField {
    pub fn scalar(grid: TorusGrid, role: FieldRole, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.len());
        Self { grid, role, components: vec![values] }
    }

    pub fn from_components(grid: TorusGrid, role: FieldRole, components: Vec<Vec<f64>>) -> Self {
        assert!(components.iter().all(|c| c.len() == grid.len()));
        Self { grid, role, components }
    }

    pub fn zeros(grid: TorusGrid, role: FieldRole, ncomp: usize) -> Self {
        Self { grid, role, components: vec![vec![0.0; grid.len()]; ncomp] }
    }

    pub fn from_fn(grid: TorusGrid, role: FieldRole, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|k| {
                let x = grid.node(k);
                f(&x[..grid.dim()])
            })
            .collect();
        Self::scalar(grid, role, values)
    }

    pub fn values(&self) -> &[f64] {
        &self.components[0]
    }

    pub fn ncomp(&self) -> usize {
        self.components.len()
    }

    /// Grid quadrature `Σ v h^d` per component.
    pub fn integral(&self) -> Vec<f64> {
        let w = self.grid.weight();
        self.components.iter().map(|c| c.iter().sum::<f64>() * w).collect()
    }

    /// Grid mean per component (equals the integral on the unit torus).
    pub fn mean(&self) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.components
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Periodic multilinear interpolation of component `c` at an arbitrary point.
    pub fn interpolate(&self, c: usize, x: &[f64]) -> f64 {
        interp_periodic(&self.components[c], self.grid.n(), self.grid.dim(), x)
    }
}

/// Periodic multilinear interpolation of node values on an `n^d` torus grid.
pub(crate) fn interp_periodic(vals: &[f64], n: usize, d: usize, x: &[f64]) -> f64 {
    let locate = |t: f64| {
        let s = (t - t.floor()) * n as f64;
        let i0 = (s.floor() as usize).min(n - 1);
        let frac = s - i0 as f64;
        (i0, (i0 + 1) % n, frac)
    };
    if d == 1 {
        let (i0, i1, t) = locate(x[0]);
        if t == 0.0 {
            return vals[i0];
        }
        (1.0 - t) * vals[i0] + t * vals[i1]
    } else {
        let (i0, i1, s) = locate(x[0]);
        let (j0, j1, t) = locate(x[1]);
        let at = |i: usize, j: usize| vals[i * n + j];
        if s == 0.0 && t == 0.0 {
            return at(i0, j0);
        }
        (1.0 - s) * ((1.0 - t) * at(i0, j0) + t * at(i0, j1))
            + s * ((1.0 - t) * at(i1, j0) + t * at(i1, j1))
    }
}
