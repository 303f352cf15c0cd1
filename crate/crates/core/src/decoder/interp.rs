//! Tabulated denoiser: posterior mean and variance on a grid of
//! observations, linearly interpolated in between.
//!
//! Base nodes sit at `w sinh(xi)` for uniform `xi`, with `w` the noise
//! standard deviation, so spacing is fine near the bulk of the prior and
//! grows geometrically across its heavy tail. Segments whose midpoint misses
//! the exact denoiser by more than the tolerance are bisected.

use super::prior::{conditional_mean_var, PriorModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpGrid {
    pub points: usize,
    /// Half-width of the grid beyond the prior support, in noise standard
    /// deviations.
    pub span_sigmas: f64,
    /// Bisect a segment while its midpoint mean error exceeds this fraction
    /// of the prior or noise standard deviation, whichever is larger...
    pub refine_tolerance: f64,
    /// ...or its variance error exceeds this fraction of the local variance.
    pub variance_tolerance: f64,
    /// Refinement stops once the table holds this many nodes.
    pub max_points: usize,
}

impl Default for InterpGrid {
    fn default() -> Self {
        InterpGrid {
            points: 256,
            span_sigmas: 40.0,
            refine_tolerance: 2e-4,
            variance_tolerance: 1e-2,
            max_points: 4096,
        }
    }
}

#[derive(Debug, Clone)]
pub struct InterpTable {
    noise_var: f64,
    /// Largest magnitude in the prior's support.
    edge: f64,
    nodes: Vec<f64>,
    means: Vec<f64>,
    vars: Vec<f64>,
}

struct Refiner<'a> {
    prior: &'a PriorModel,
    noise_var: f64,
    tol_mean: f64,
    tol_var: f64,
    var_floor: f64,
    budget: usize,
}

impl Refiner<'_> {
    /// Appends the refined interior of `(a, b]` to the output vectors.
    fn segment(
        &mut self,
        a: (f64, f64, f64),
        b: (f64, f64, f64),
        depth: u32,
        out: &mut (Vec<f64>, Vec<f64>, Vec<f64>),
    ) -> Result<()> {
        if self.budget > 0 && depth < 24 {
            let y = 0.5 * (a.0 + b.0);
            let (m, v) = conditional_mean_var(y, self.noise_var, self.prior)?;
            let err_m = (m - 0.5 * (a.1 + b.1)).abs();
            let err_v = (v - 0.5 * (a.2 + b.2)).abs();
            if err_m > self.tol_mean || err_v > self.tol_var * v.max(self.var_floor) {
                self.budget -= 1;
                let mid = (y, m, v);
                self.segment(a, mid, depth + 1, out)?;
                return self.segment(mid, b, depth + 1, out);
            }
        }
        out.0.push(b.0);
        out.1.push(b.1);
        out.2.push(b.2);
        Ok(())
    }
}

/// Tabulates [`conditional_mean_var`] for noise variance `noise_var`.
pub fn build_interp_table(prior: &PriorModel, noise_var: f64, grid: &InterpGrid) -> Result<InterpTable> {
    if grid.points < 2 {
        return Err(Error::param("points", "need at least two grid points"));
    }
    if !(noise_var > 0.0) || !noise_var.is_finite() {
        return Err(Error::param("noise_var", format!("must be positive, got {noise_var}")));
    }
    let width = noise_var.sqrt();
    let span = grid.span_sigmas * width + prior.support();
    let xi_max = (span / width).asinh();
    let step = 2.0 * xi_max / (grid.points - 1) as f64;
    let mut base = Vec::with_capacity(grid.points);
    for j in 0..grid.points {
        let xi = -xi_max + step * j as f64;
        // exact symmetry of the node set
        let y = if 2 * j + 1 == grid.points { 0.0 } else { width * xi.sinh() };
        let (m, v) = conditional_mean_var(y, noise_var, prior)?;
        base.push((y, m, v));
    }
    let mut refiner = Refiner {
        prior,
        noise_var,
        tol_mean: grid.refine_tolerance * prior.variance().sqrt().max(width),
        tol_var: grid.variance_tolerance,
        var_floor: 1e-2 * prior.variance().min(noise_var),
        budget: grid.max_points.saturating_sub(grid.points),
    };
    let mut out = (vec![base[0].0], vec![base[0].1], vec![base[0].2]);
    for w in base.windows(2) {
        refiner.segment(w[0], w[1], 0, &mut out)?;
    }
    let (nodes, means, vars) = out;
    Ok(InterpTable {
        noise_var,
        edge: prior.support(),
        nodes,
        means,
        vars,
    })
}

impl InterpTable {
    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Interpolated `(mean, variance)`. Beyond the grid the mean approaches
    /// the support edge like `1 / (y - edge)` and the variance decays like
    /// its square, matched to the end node.
    pub fn eval(&self, y: f64) -> (f64, f64) {
        let n = self.nodes.len();
        if y >= self.nodes[n - 1] {
            return self.tail(y, n - 1, self.edge);
        }
        if !(y > self.nodes[0]) {
            if y.is_nan() {
                return (f64::NAN, f64::NAN);
            }
            return self.tail(y, 0, -self.edge);
        }
        let j = self.nodes.partition_point(|&x| x <= y) - 1;
        let (y0, y1) = (self.nodes[j], self.nodes[j + 1]);
        let t = (y - y0) / (y1 - y0);
        let m = self.means[j] + t * (self.means[j + 1] - self.means[j]);
        let v = self.vars[j] + t * (self.vars[j + 1] - self.vars[j]);
        (m, v.max(0.0))
    }

    fn tail(&self, y: f64, j: usize, edge: f64) -> (f64, f64) {
        let (yj, mj, vj) = (self.nodes[j], self.means[j], self.vars[j]);
        let gap = yj - edge;
        if gap == 0.0 || (y - edge).signum() != gap.signum() {
            return (mj, vj);
        }
        let r = gap / (y - edge);
        (edge - (edge - mj) * r, vj * r * r)
    }
}
