//! Path simulation of a full scenario under the physical measure.

use std::sync::Arc;

use crate::coefficients::{Coefficients, XiDistribution};
use crate::error::{Error, Result};
use crate::grid::SamplePath;
use crate::market::{simulate_prices, vol_from_state};
use crate::rde::{euler_solve_with, SolveConfig};
use crate::rng::{RandomSource, XI_STREAM};
use crate::scenario::Scenario;
use crate::viability::margin_series;
use crate::volterra::{build_kernel_matrix, du_transform, KernelMatrix};

/// A validated scenario with its kernel matrix and `xi` law prepared.
#[derive(Debug, Clone)]
pub struct Model {
    scenario: Scenario,
    solve: SolveConfig,
    kernel: Arc<KernelMatrix>,
    xi: XiDistribution,
}

impl Model {
    pub fn new(scenario: Scenario) -> Result<Self> {
        scenario.validate()?;
        let kernel = Arc::new(build_kernel_matrix(scenario.grid, scenario.hurst)?);
        Self::with_kernel(scenario, kernel)
    }

    /// Reuses an existing kernel matrix; its grid and Hurst index must match.
    pub fn with_kernel(scenario: Scenario, kernel: Arc<KernelMatrix>) -> Result<Self> {
        scenario.validate()?;
        if kernel.grid() != &scenario.grid || kernel.hurst() != scenario.hurst {
            return Err(Error::GridMismatch("kernel matrix does not match the scenario".into()));
        }
        let solve = scenario.solve_config()?;
        let xi = XiDistribution::new(&scenario.xi)?;
        Ok(Self {
            scenario,
            solve,
            kernel,
            xi,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn kernel(&self) -> &KernelMatrix {
        &self.kernel
    }

    pub fn xi_distribution(&self) -> &XiDistribution {
        &self.xi
    }

    pub fn solve_config(&self) -> &SolveConfig {
        &self.solve
    }

    pub fn coefficients(&self) -> &dyn Coefficients {
        &self.scenario.coefficients
    }

    /// The level `xi` of path `path`.
    pub fn draw_xi(&self, seed: u64, path: u64) -> f64 {
        self.xi.sample(&mut RandomSource::for_stream(seed, path, XI_STREAM))
    }

    /// The standard Gaussian sources of path `path`, one per Brownian
    /// component.
    pub fn gaussian_streams(&self, seed: u64, path: u64) -> Vec<RandomSource> {
        (0..self.scenario.market.assets() as u64)
            .map(|k| RandomSource::for_stream(seed, path, k))
            .collect()
    }

    /// The Brownian path `W` of path `path`.
    pub fn brownian_path(&self, seed: u64, path: u64) -> SamplePath {
        let grid = self.scenario.grid;
        let sq = grid.dt().sqrt();
        let columns: Vec<Vec<f64>> = self
            .gaussian_streams(seed, path)
            .into_iter()
            .map(|mut rng| {
                let mut acc = 0.0;
                let mut col = Vec::with_capacity(grid.len());
                col.push(0.0);
                for _ in 0..grid.steps() {
                    acc += sq * rng.gaussian();
                    col.push(acc);
                }
                col
            })
            .collect();
        SamplePath::from_columns(grid, &columns).expect("column lengths match the grid")
    }

    /// `xi`, `W`, `B`, `U`, `V`, `S` and the margin of `U` in `K(xi)`.
    pub fn physical_path(&self, seed: u64, path: u64, project: bool) -> Result<PhysicalPath> {
        let xi = self.draw_xi(seed, path);
        let poly = self.scenario.polyhedron(xi)?;
        let w = self.brownian_path(seed, path);
        let b = du_transform(&w, &self.kernel)?;
        let u = euler_solve_with(
            &self.scenario.coefficients,
            xi,
            &b,
            &self.solve,
            project.then_some(&poly),
        )?;
        let v = vol_from_state(&u, &self.scenario.market)?;
        let s = simulate_prices(&v, &w, &self.scenario.market)?;
        let margin = margin_series(&u, &poly);
        Ok(PhysicalPath {
            xi,
            w,
            b,
            u,
            v,
            s,
            margin,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalPath {
    pub xi: f64,
    pub w: SamplePath,
    pub b: SamplePath,
    pub u: SamplePath,
    pub v: SamplePath,
    pub s: SamplePath,
    /// Slack of `U(t_i)` in `K(xi)`.
    pub margin: Vec<f64>,
}

impl PhysicalPath {
    pub fn min_margin(&self) -> f64 {
        self.margin.iter().copied().fold(f64::INFINITY, f64::min)
    }
}
