//! Tensor-product phase grids and the fields that live on them.
//!
//! A [`PhaseGrid`] is the product of `d` velocity axes and any number of
//! internal-variable axes, each discretised by the uniform midpoint rule.
//! Cells are stored row-major with the last axis varying fastest; kernels
//! walk the array one "row" (a run along the last axis) at a time so that
//! separable functions cost one multiplication per cell.

use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Exec};

/// Target number of cells per kernel block.
const BLOCK_CELLS: usize = 8192;

/// One uniformly discretised axis `[min, max]` with `points` midpoint nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, points: usize) -> Result<Self> {
        let axis = Axis { min, max, points };
        axis.validate()?;
        Ok(axis)
    }

    /// Axis of `points` cells centred on `center` with half-width `half_width`.
    pub fn centered(center: f64, half_width: f64, points: usize) -> Result<Self> {
        Self::new(center - half_width, center + half_width, points)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite() && self.min < self.max) {
            return Err(Error::InvalidGrid(format!(
                "axis bounds [{}, {}] must be finite with min < max",
                self.min, self.max
            )));
        }
        if self.points < 2 {
            return Err(Error::InvalidGrid(format!(
                "axis needs at least 2 points, got {}",
                self.points
            )));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        (self.max - self.min) / self.points as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.min + (i as f64 + 0.5) * self.spacing()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.node(i)).collect()
    }
}

/// Velocity axes followed by internal-variable axes.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGrid {
    velocity: Vec<Axis>,
    internal: Vec<Axis>,
    nodes: Vec<Vec<f64>>,
    dims: Vec<usize>,
    len: usize,
    cell_volume: f64,
}

impl PhaseGrid {
    pub fn new(velocity: Vec<Axis>, internal: Vec<Axis>) -> Result<Self> {
        if velocity.is_empty() {
            return Err(Error::InvalidGrid("at least one velocity axis is required".into()));
        }
        for axis in velocity.iter().chain(&internal) {
            axis.validate()?;
        }
        let all: Vec<Axis> = velocity.iter().chain(&internal).copied().collect();
        let dims: Vec<usize> = all.iter().map(|a| a.points).collect();
        let len = dims
            .iter()
            .try_fold(1usize, |acc, &p| acc.checked_mul(p))
            .ok_or_else(|| Error::InvalidGrid("grid too large".into()))?;
        Ok(PhaseGrid {
            nodes: all.iter().map(Axis::nodes).collect(),
            cell_volume: all.iter().map(Axis::spacing).product(),
            velocity,
            internal,
            dims,
            len,
        })
    }

    /// Velocity dimension `d`.
    pub fn d(&self) -> usize {
        self.velocity.len()
    }

    /// Number of internal axes.
    pub fn l(&self) -> usize {
        self.internal.len()
    }

    pub fn velocity_axes(&self) -> &[Axis] {
        &self.velocity
    }

    pub fn internal_axes(&self) -> &[Axis] {
        &self.internal
    }

    pub fn axis(&self, a: usize) -> Axis {
        if a < self.d() {
            self.velocity[a]
        } else {
            self.internal[a - self.d()]
        }
    }

    pub fn n_axes(&self) -> usize {
        self.dims.len()
    }

    pub fn nodes(&self, a: usize) -> &[f64] {
        &self.nodes[a]
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Quadrature weight of every cell: the product of the axis spacings.
    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    pub fn row_len(&self) -> usize {
        *self.dims.last().expect("grid has at least one axis")
    }

    pub fn rows(&self) -> usize {
        self.len / self.row_len()
    }

    /// Block length used by kernels: whole rows, roughly `BLOCK_CELLS` cells.
    pub fn block_len(&self) -> usize {
        let row = self.row_len();
        (BLOCK_CELLS / row).max(1) * row
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dims.len()];
        for (a, &p) in self.dims.iter().enumerate().rev() {
            idx[a] = flat % p;
            flat /= p;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.dims).fold(0, |acc, (&i, &p)| acc * p + i)
    }

    /// Phase-space point `(v, eta)` of a cell.
    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .enumerate()
            .map(|(a, &i)| self.nodes[a][i])
            .collect()
    }

    /// Calls `f(outer, cells)` for every row inside `cells`, where `outer`
    /// holds the indices of all axes but the last. `cells` must start on a
    /// row boundary.
    pub fn walk_rows(&self, cells: Range<usize>, mut f: impl FnMut(&[usize], Range<usize>)) {
        let row = self.row_len();
        debug_assert_eq!(cells.start % row, 0);
        let outer_dims = &self.dims[..self.dims.len() - 1];
        let mut outer = vec![0usize; outer_dims.len()];
        let mut r = cells.start / row;
        for a in (0..outer_dims.len()).rev() {
            outer[a] = r % outer_dims[a];
            r /= outer_dims[a];
        }
        let mut start = cells.start;
        while start < cells.end {
            let end = (start + row).min(cells.end);
            f(&outer, start..end);
            start = end;
            for a in (0..outer.len()).rev() {
                outer[a] += 1;
                if outer[a] < outer_dims[a] {
                    break;
                }
                outer[a] = 0;
            }
        }
    }
}

/// Nonnegative samples of one species' distribution function on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionField {
    grid: Arc<PhaseGrid>,
    values: Vec<f64>,
}

impl DistributionField {
    pub fn new(grid: Arc<PhaseGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidField(format!(
                "{} values for a grid of {} cells",
                values.len(),
                grid.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidField(format!("value {bad} is negative or not finite")));
        }
        Ok(DistributionField { grid, values })
    }

    pub fn zeros(grid: Arc<PhaseGrid>) -> Self {
        let values = vec![0.0; grid.len()];
        DistributionField { grid, values }
    }

    /// Samples `f(point)` at every cell.
    pub fn from_fn(grid: Arc<PhaseGrid>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..grid.len() {
            values.push(f(&grid.point(i)));
        }
        Self::new(grid, values)
    }

    pub(crate) fn from_raw(grid: Arc<PhaseGrid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(grid.len(), values.len());
        DistributionField { grid, values }
    }

    pub fn grid(&self) -> &Arc<PhaseGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut Vec<f64> {
        &mut self.values
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Quadrature mass `∫ f`.
    pub fn mass(&self) -> f64 {
        let w = self.grid.cell_volume();
        let partials = exec::map_blocks(Exec::Sequential, self.values.len(), self.grid.block_len(), |_, r| {
            self.values[r].iter().sum::<f64>()
        });
        w * partials.into_iter().sum::<f64>()
    }

    /// `self + other` scaled, for building sums of components.
    pub fn add_scaled(&mut self, other: &DistributionField, scale: f64) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::InvalidField("fields live on different grids".into()));
        }
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += scale * b;
        }
        if scale < 0.0 && self.values.iter().any(|v| *v < 0.0) {
            return Err(Error::InvalidField("subtraction produced negative values".into()));
        }
        Ok(())
    }
}

/// A function of the form `scale · Π_a g_a(x_a)` on a grid, kept in factored
/// form. Every Maxwellian in the models is separable.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableField {
    scale: f64,
    log_factors: Vec<Vec<f64>>,
    factors: Vec<Vec<f64>>,
}

impl SeparableField {
    pub fn from_log_factors(scale: f64, log_factors: Vec<Vec<f64>>) -> Self {
        let factors = log_factors
            .iter()
            .map(|lf| lf.iter().map(|x| x.exp()).collect())
            .collect();
        SeparableField { scale, log_factors, factors }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn factor(&self, a: usize) -> &[f64] {
        &self.factors[a]
    }

    pub fn log_factor(&self, a: usize) -> &[f64] {
        &self.log_factors[a]
    }

    pub fn n_axes(&self) -> usize {
        self.factors.len()
    }

    pub fn value(&self, idx: &[usize]) -> f64 {
        idx.iter()
            .enumerate()
            .fold(self.scale, |acc, (a, &i)| acc * self.factors[a][i])
    }

    pub fn ln_value(&self, idx: &[usize]) -> f64 {
        if self.scale <= 0.0 {
            return f64::NEG_INFINITY;
        }
        idx.iter()
            .enumerate()
            .fold(self.scale.ln(), |acc, (a, &i)| acc + self.log_factors[a][i])
    }

    /// `scale · Π g_a(i_a)` over every axis but the last.
    pub fn row_prefix(&self, outer: &[usize]) -> f64 {
        outer
            .iter()
            .enumerate()
            .fold(self.scale, |acc, (a, &i)| acc * self.factors[a][i])
    }

    /// Logarithm of [`row_prefix`](Self::row_prefix), computed additively.
    pub fn row_log_prefix(&self, outer: &[usize]) -> f64 {
        if self.scale <= 0.0 {
            return f64::NEG_INFINITY;
        }
        outer
            .iter()
            .enumerate()
            .fold(self.scale.ln(), |acc, (a, &i)| acc + self.log_factors[a][i])
    }

    pub fn last_factor(&self) -> &[f64] {
        self.factors.last().expect("at least one axis")
    }

    pub fn last_log_factor(&self) -> &[f64] {
        self.log_factors.last().expect("at least one axis")
    }

    /// Quadrature mass, computed axis by axis.
    pub fn mass(&self, grid: &PhaseGrid) -> f64 {
        self.factors
            .iter()
            .enumerate()
            .fold(self.scale, |acc, (a, g)| acc * grid.axis(a).spacing() * g.iter().sum::<f64>())
    }

    /// Per-axis discrete mean and variance of the normalised factor.
    pub fn axis_mean_var(&self, grid: &PhaseGrid, a: usize) -> (f64, f64) {
        let g = &self.factors[a];
        let x = grid.nodes(a);
        let z: f64 = g.iter().sum();
        let mean = g.iter().zip(x).map(|(g, x)| g * x).sum::<f64>() / z;
        let var = g.iter().zip(x).map(|(g, x)| g * (x - mean).powi(2)).sum::<f64>() / z;
        (mean, var)
    }

    pub fn materialize(&self, grid: &Arc<PhaseGrid>, exec: Exec) -> DistributionField {
        let mut values = vec![0.0; grid.len()];
        let block = grid.block_len();
        exec::for_each_block_mut(exec, block, &mut values, |b, chunk| {
            let start = b * block;
            grid.walk_rows(start..start + chunk.len(), |outer, cells| {
                let pre = self.row_prefix(outer);
                let last = self.last_factor();
                for (v, g) in chunk[cells.start - start..cells.end - start].iter_mut().zip(last) {
                    *v = pre * g;
                }
            });
        });
        DistributionField::from_raw(grid.clone(), values)
    }
}
