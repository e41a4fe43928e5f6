//! Uniform time grids and grid-valued sample paths.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform discretization `t_i = i T / n`, `i = 0..=n`, of `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid", into = "RawGrid")]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    horizon: f64,
    steps: usize,
}

impl TryFrom<RawGrid> for TimeGrid {
    type Error = Error;

    fn try_from(raw: RawGrid) -> Result<Self> {
        TimeGrid::new(raw.horizon, raw.steps)
    }
}

impl From<TimeGrid> for RawGrid {
    fn from(grid: TimeGrid) -> Self {
        RawGrid {
            horizon: grid.horizon,
            steps: grid.steps,
        }
    }
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Domain(format!(
                "grid horizon must be positive and finite, got {horizon}"
            )));
        }
        if steps == 0 {
            return Err(Error::Domain("grid must have at least one step".into()));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of steps `n`; the grid has `n + 1` points.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        debug_assert!(i <= self.steps);
        if i == self.steps {
            self.horizon
        } else {
            self.horizon * i as f64 / self.steps as f64
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(move |i| self.time(i))
    }

    /// The same horizon with `factor` times as many steps.
    pub fn refine(&self, factor: usize) -> Result<Self> {
        Self::new(self.horizon, self.steps * factor)
    }
}

/// A `d`-component path on a [`TimeGrid`], stored row-major: row `i` is the
/// value at `t_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    grid: TimeGrid,
    dims: usize,
    values: Vec<f64>,
}

impl SamplePath {
    pub fn zeros(grid: TimeGrid, dims: usize) -> Self {
        Self {
            grid,
            dims,
            values: vec![0.0; grid.len() * dims],
        }
    }

    /// Path held constant at `value`.
    pub fn constant(grid: TimeGrid, value: &[f64]) -> Self {
        let mut values = Vec::with_capacity(grid.len() * value.len());
        for _ in 0..grid.len() {
            values.extend_from_slice(value);
        }
        Self {
            grid,
            dims: value.len(),
            values,
        }
    }

    pub fn from_values(grid: TimeGrid, dims: usize, values: Vec<f64>) -> Result<Self> {
        if dims == 0 || values.len() != grid.len() * dims {
            return Err(Error::Dimension(format!(
                "expected {} x {} values, got {}",
                grid.len(),
                dims,
                values.len()
            )));
        }
        Ok(Self { grid, dims, values })
    }

    /// Builds a path from per-component columns of length `n + 1`.
    pub fn from_columns(grid: TimeGrid, columns: &[Vec<f64>]) -> Result<Self> {
        let dims = columns.len();
        if dims == 0 || columns.iter().any(|c| c.len() != grid.len()) {
            return Err(Error::Dimension(format!(
                "every column must have {} entries",
                grid.len()
            )));
        }
        let mut values = Vec::with_capacity(grid.len() * dims);
        for i in 0..grid.len() {
            values.extend(columns.iter().map(|c| c[i]));
        }
        Ok(Self { grid, dims, values })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dims..(i + 1) * self.dims]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.dims..(i + 1) * self.dims]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dims)
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.values[i * self.dims + k]
    }

    pub fn set(&mut self, i: usize, k: usize, value: f64) {
        self.values[i * self.dims + k] = value;
    }

    pub fn component(&self, k: usize) -> Vec<f64> {
        self.rows().map(|r| r[k]).collect()
    }

    /// `x(t_{i+1}) - x(t_i)` for component `k`, `i = 0..n`.
    pub fn increments(&self, k: usize) -> Vec<f64> {
        let col = self.component(k);
        col.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Keeps every `stride`-th point; the result lives on a grid with
    /// `n / stride` steps.
    pub fn subsample(&self, stride: usize) -> Result<Self> {
        if stride == 0 || self.grid.steps % stride != 0 {
            return Err(Error::Domain(format!(
                "stride {stride} does not divide {} steps",
                self.grid.steps
            )));
        }
        let grid = TimeGrid::new(self.grid.horizon, self.grid.steps / stride)?;
        let mut values = Vec::with_capacity(grid.len() * self.dims);
        for i in 0..grid.len() {
            values.extend_from_slice(self.row(i * stride));
        }
        Ok(Self {
            grid,
            dims: self.dims,
            values,
        })
    }

    /// Returns `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &SamplePath) -> Result<Self> {
        if self.grid != other.grid || self.dims != other.dims {
            return Err(Error::GridMismatch("axpy operands differ".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + alpha * b)
            .collect();
        Ok(Self {
            grid: self.grid,
            dims: self.dims,
            values,
        })
    }
}
