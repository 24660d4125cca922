//! Uniform-grid representation of monotone functions on a bounded interval.
//!
//! Every function in the crate lives on one shared uniform [`Grid`]; compositions
//! and inverses are re-tabulated onto it, which keeps all operations O(m) and
//! makes function equality testable in sup norm.

use crate::error::{AtmError, Result};
use serde::{Deserialize, Serialize};

/// Uniform grid of `m` nodes on the support interval `[s1, s2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    s1: f64,
    s2: f64,
    m: usize,
}

impl Grid {
    pub fn new(s1: f64, s2: f64, m: usize) -> Result<Self> {
        if !(s2 > s1) || !s1.is_finite() || !s2.is_finite() {
            return Err(AtmError::Parameter(format!(
                "support interval [{s1}, {s2}] must be finite with s2 > s1"
            )));
        }
        if m < 2 {
            return Err(AtmError::Parameter(format!("grid needs at least 2 nodes, got {m}")));
        }
        Ok(Grid { s1, s2, m })
    }

    /// Default grid: 101 nodes on [0, 1].
    pub fn unit(m: usize) -> Result<Self> {
        Grid::new(0.0, 1.0, m)
    }

    pub fn s1(&self) -> f64 {
        self.s1
    }

    pub fn s2(&self) -> f64 {
        self.s2
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Node spacing (s2 - s1) / (m - 1).
    pub fn spacing(&self) -> f64 {
        (self.s2 - self.s1) / (self.m - 1) as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        debug_assert!(j < self.m);
        if j == self.m - 1 {
            self.s2
        } else {
            self.s1 + self.spacing() * j as f64
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.m).map(|j| self.node(j)).collect()
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.s1 - 1e-12 && x <= self.s2 + 1e-12
    }

    fn check_domain(&self, x: f64) -> Result<f64> {
        if !self.contains(x) {
            return Err(AtmError::Domain { value: x, lo: self.s1, hi: self.s2 });
        }
        Ok(x.clamp(self.s1, self.s2))
    }

    /// Trapezoid rule for values tabulated at the grid nodes.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.m);
        let h = self.spacing();
        let interior: f64 = values[1..self.m - 1].iter().sum();
        h * (0.5 * (values[0] + values[self.m - 1]) + interior)
    }
}

/// Discretization of the quantile domain: `K` strictly increasing levels in (0,1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbGrid {
    levels: Vec<f64>,
}

impl ProbGrid {
    /// Equally spaced levels u_k = k/(K+1), k = 1..K.
    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(AtmError::Parameter("prob grid needs at least one level".into()));
        }
        let levels = (1..=k).map(|i| i as f64 / (k + 1) as f64).collect();
        Ok(ProbGrid { levels })
    }

    pub fn from_levels(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(AtmError::Parameter("prob grid needs at least one level".into()));
        }
        for w in levels.windows(2) {
            if !(w[0] < w[1]) {
                return Err(AtmError::Parameter("prob levels must be strictly increasing".into()));
            }
        }
        if levels[0] <= 0.0 || *levels.last().unwrap() >= 1.0 {
            return Err(AtmError::Parameter("prob levels must lie in (0,1)".into()));
        }
        Ok(ProbGrid { levels })
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }
}

/// Replace `values` by its running maximum, then clamp into `[lo, hi]`.
///
/// Idempotent, and the identity on already non-decreasing in-range input.
pub fn enforce_monotone(values: &mut [f64], lo: f64, hi: f64) {
    let mut running = f64::NEG_INFINITY;
    for v in values.iter_mut() {
        if *v > running {
            running = *v;
        }
        *v = running.clamp(lo, hi);
    }
}

/// A non-decreasing function tabulated on a uniform grid, interpolated
/// piecewise-linearly between nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneFn {
    grid: Grid,
    values: Vec<f64>,
}

impl MonotoneFn {
    /// Build from node values, rejecting non-monotone input.
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(AtmError::GridMismatch(format!(
                "expected {} node values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(AtmError::Parameter("node values must be finite".into()));
        }
        for w in values.windows(2) {
            if w[0] > w[1] + 1e-12 {
                return Err(AtmError::Parameter("node values must be non-decreasing".into()));
            }
        }
        Ok(MonotoneFn { grid, values })
    }

    /// Build from node values, restoring monotonicity by running maximum and
    /// clamping into the support interval.
    pub fn projected(grid: Grid, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(AtmError::GridMismatch(format!(
                "expected {} node values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(AtmError::Parameter("node values must be finite".into()));
        }
        enforce_monotone(&mut values, grid.s1(), grid.s2());
        Ok(MonotoneFn { grid, values })
    }

    pub fn identity(grid: Grid) -> Self {
        MonotoneFn { values: grid.nodes(), grid }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Piecewise-linear evaluation; exact at nodes.
    pub fn eval(&self, x: f64) -> Result<f64> {
        let x = self.grid.check_domain(x)?;
        Ok(self.eval_clamped(x))
    }

    /// Evaluation with the argument silently clamped into the domain.
    pub fn eval_clamped(&self, x: f64) -> f64 {
        let x = x.clamp(self.grid.s1(), self.grid.s2());
        let h = self.grid.spacing();
        let t = (x - self.grid.s1()) / h;
        let j = (t.floor() as usize).min(self.grid.len() - 2);
        let frac = t - j as f64;
        self.values[j] + frac * (self.values[j + 1] - self.values[j])
    }

    /// Left-continuous inverse: inf { x : f(x) >= y } on the interpolant.
    /// Flat segments map to their left edge.
    pub fn invert(&self, y: f64) -> Result<f64> {
        let lo = self.values[0];
        let hi = self.values[self.grid.len() - 1];
        if y < lo - 1e-12 || y > hi + 1e-12 {
            return Err(AtmError::Domain { value: y, lo, hi });
        }
        let y = y.clamp(lo, hi);
        // smallest j with values[j] >= y
        let j = self.values.partition_point(|v| *v < y);
        if j == 0 {
            return Ok(self.grid.node(0));
        }
        let (v0, v1) = (self.values[j - 1], self.values[j]);
        // v0 < y <= v1, so the segment is not flat at y
        let frac = (y - v0) / (v1 - v0);
        Ok(self.grid.node(j - 1) + frac * self.grid.spacing())
    }

    /// Tabulate the left-continuous inverse back onto the grid.
    /// Only meaningful when the range spans the full support.
    pub fn invert_tabulated(&self) -> Result<MonotoneFn> {
        let mut values = Vec::with_capacity(self.grid.len());
        let lo = self.values[0];
        let hi = self.values[self.grid.len() - 1];
        for j in 0..self.grid.len() {
            let y = self.grid.node(j).clamp(lo, hi);
            values.push(self.invert(y)?);
        }
        MonotoneFn::projected(self.grid, values)
    }

    /// Tabulates f(g(x)) at the nodes; monotonicity restored by projection.
    pub fn compose(&self, inner: &MonotoneFn) -> Result<MonotoneFn> {
        if self.grid != inner.grid {
            return Err(AtmError::GridMismatch("compose requires a shared grid".into()));
        }
        let values = inner.values.iter().map(|&y| self.eval_clamped(y)).collect();
        MonotoneFn::projected(self.grid, values)
    }

    /// Trapezoid integral of the tabulated values over the support.
    pub fn integrate(&self) -> f64 {
        self.grid.integrate(&self.values)
    }

    /// Slope at `x`: central difference with step half a grid spacing
    /// (so flat cells report slope zero at their midpoint), one-sided at
    /// the endpoints. Non-negative for monotone tabulations.
    pub fn derivative(&self, x: f64) -> Result<f64> {
        let x = self.grid.check_domain(x)?;
        let h = 0.5 * self.grid.spacing();
        let a = (x - h).max(self.grid.s1());
        let b = (x + h).min(self.grid.s2());
        Ok((self.eval_clamped(b) - self.eval_clamped(a)) / (b - a))
    }

    /// Sup distance over the shared grid nodes.
    pub fn sup_distance(&self, other: &MonotoneFn) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Natural cubic spline through strictly increasing knots.
#[derive(Debug, Clone)]
pub struct NaturalCubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    second: Vec<f64>,
}

impl NaturalCubicSpline {
    pub fn new(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 3 {
            return Err(AtmError::Parameter(format!(
                "natural cubic spline needs at least 3 points, got {}",
                points.len()
            )));
        }
        for w in points.windows(2) {
            if !(w[0].0 < w[1].0) {
                return Err(AtmError::Parameter("spline knots must be strictly increasing in x".into()));
            }
        }
        let n = points.len();
        let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.1).collect();

        // Tridiagonal solve for interior second derivatives; natural
        // boundary conditions pin the first and last to zero.
        let mut second = vec![0.0; n];
        if n > 2 {
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            let mut sub = vec![0.0; k];
            let mut sup = vec![0.0; k];
            for i in 0..k {
                let h0 = xs[i + 1] - xs[i];
                let h1 = xs[i + 2] - xs[i + 1];
                diag[i] = 2.0 * (h0 + h1);
                sub[i] = h0;
                sup[i] = h1;
                rhs[i] = 6.0 * ((ys[i + 2] - ys[i + 1]) / h1 - (ys[i + 1] - ys[i]) / h0);
            }
            // Thomas algorithm
            for i in 1..k {
                let w = sub[i] / diag[i - 1];
                diag[i] -= w * sup[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            let mut sol = vec![0.0; k];
            sol[k - 1] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                sol[i] = (rhs[i] - sup[i] * sol[i + 1]) / diag[i];
            }
            second[1..=k].copy_from_slice(&sol);
        }
        Ok(NaturalCubicSpline { xs, ys, second })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let x = x.clamp(self.xs[0], self.xs[n - 1]);
        let mut j = self.xs.partition_point(|v| *v <= x);
        j = j.clamp(1, n - 1);
        let (x0, x1) = (self.xs[j - 1], self.xs[j]);
        let h = x1 - x0;
        let a = (x1 - x) / h;
        let b = (x - x0) / h;
        a * self.ys[j - 1]
            + b * self.ys[j]
            + ((a * a * a - a) * self.second[j - 1] + (b * b * b - b) * self.second[j]) * h * h / 6.0
    }

    /// Tabulate onto a grid and project to a monotone function.
    pub fn tabulate_monotone(&self, grid: Grid) -> Result<MonotoneFn> {
        let values = (0..grid.len()).map(|j| self.eval(grid.node(j))).collect();
        MonotoneFn::projected(grid, values)
    }
}
