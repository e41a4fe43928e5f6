//! The Volterra kernel `K_H` and the transform `B(t) = int_0^t K_H(t, s) dW(s)`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fbm::Hurst;
use crate::grid::{SamplePath, TimeGrid};
use crate::special::{
    gamma, gauss_legendre_8, integrate_tanh_sinh_gaps, series, Connection, CONNECTION_THRESHOLD,
};

/// Evaluator for
/// `K_H(t, s) = (t - s)^{H - 1/2} / Gamma(H + 1/2) * 2F1(1/2 - H, H - 1/2; H + 1/2; 1 - t/s)`
/// on `0 < s < t`, and 0 for `s >= t`.
///
/// Evaluated in Pfaff-transformed form
/// `(t-s)^{H-1/2} (t/s)^{H-1/2} 2F1(1/2-H, 1; H+1/2; 1 - s/t) / Gamma(H+1/2)`,
/// which stays finite as `s -> 0`.
#[derive(Debug, Clone, Copy)]
pub struct VolterraKernel {
    hurst: f64,
    inv_gamma: f64,
    connection: Option<Connection>,
}

impl VolterraKernel {
    pub fn new(hurst: Hurst) -> Self {
        let h = hurst.value();
        Self {
            hurst: h,
            inv_gamma: 1.0 / gamma(h + 0.5),
            connection: Connection::new(0.5 - h, 1.0, h + 0.5),
        }
    }

    pub fn eval(&self, t: f64, s: f64) -> Result<f64> {
        if !(s > 0.0) {
            return Err(Error::Domain(format!(
                "kernel needs s > 0 (the argument 1 - t/s is undefined at s = 0), got s = {s}"
            )));
        }
        if s >= t {
            return Ok(0.0);
        }
        self.eval_split(t, s, t - s)
    }

    /// `K_H(t, s)` with `s` and the gap `t - s` supplied separately
    /// (`s + gap = t` up to rounding).
    pub fn eval_split(&self, t: f64, s: f64, gap: f64) -> Result<f64> {
        if !(s > 0.0 && gap > 0.0) {
            return Ok(0.0);
        }
        let h = self.hurst;
        if h == 0.5 {
            return Ok(1.0);
        }
        let v = s / t;
        let w = gap / t;
        let f = match self.connection {
            Some(c) if w > CONNECTION_THRESHOLD => c.eval_complement(v)?,
            _ => series(0.5 - h, 1.0, h + 0.5, w)?,
        };
        Ok((gap / v).powf(h - 0.5) * self.inv_gamma * f)
    }

    /// The constant `V_H` with `int_0^t K_H(t,s) K_H(u,s) ds = V_H R_H(t, u)`,
    /// `R_H` the unit fBm covariance.
    pub fn variance_constant(&self) -> f64 {
        let h = self.hurst;
        let eps = 0.5 - h;
        // cos(pi H) / (1 - 2H) = sin(pi eps) / (2 eps)
        let ratio = if eps.abs() < 1e-12 {
            std::f64::consts::FRAC_PI_2
        } else {
            (std::f64::consts::PI * eps).sin() / (2.0 * eps)
        };
        gamma(2.0 - 2.0 * h) * ratio / (std::f64::consts::PI * h)
    }
}

pub fn kernel_k(t: f64, s: f64, hurst: f64) -> Result<f64> {
    VolterraKernel::new(Hurst::new(hurst)?).eval(t, s)
}

/// How the kernel is collapsed onto one value per grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Collocation {
    /// `K_H(t_i, (t_{j-1} + t_j) / 2)`.
    Midpoint,
    /// Root-mean-square of `K_H(t_i, .)` over the cell, which reproduces
    /// `int K_H(t_i, s)^2 ds` exactly.
    CellRms,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// Kernel values as displayed.
    Raw,
    /// Divided by `sqrt(V_H)` so the transform has unit fBm covariance.
    UnitVariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelOptions {
    pub collocation: Collocation,
    pub normalization: Normalization,
}

impl Default for KernelOptions {
    fn default() -> Self {
        Self {
            collocation: Collocation::CellRms,
            normalization: Normalization::UnitVariance,
        }
    }
}

/// Lower-triangular discretized kernel: entry `(i, j)`, `1 <= j <= i <= n`,
/// weights the Brownian increment over `(t_{j-1}, t_j]` in `B(t_i)`.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    grid: TimeGrid,
    hurst: Hurst,
    options: KernelOptions,
    /// Packed rows; row `i` (1-based) occupies `i` entries.
    entries: Vec<f64>,
}

impl KernelMatrix {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn hurst(&self) -> Hurst {
        self.hurst
    }

    pub fn options(&self) -> KernelOptions {
        self.options
    }

    fn offset(i: usize) -> usize {
        (i - 1) * i / 2
    }

    /// Row `i` in `1..=n`, columns `1..=i`.
    pub fn row(&self, i: usize) -> &[f64] {
        let o = Self::offset(i);
        &self.entries[o..o + i]
    }

    /// Entry `(i, j)` with zero above the diagonal.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j == 0 || i == 0 || j > i {
            0.0
        } else {
            self.entries[Self::offset(i) + j - 1]
        }
    }
}

pub fn build_kernel_matrix(grid: TimeGrid, hurst: Hurst) -> Result<KernelMatrix> {
    build_kernel_matrix_with(grid, hurst, KernelOptions::default())
}

pub fn build_kernel_matrix_with(
    grid: TimeGrid,
    hurst: Hurst,
    options: KernelOptions,
) -> Result<KernelMatrix> {
    let kernel = VolterraKernel::new(hurst);
    let scale = match options.normalization {
        Normalization::Raw => 1.0,
        Normalization::UnitVariance if hurst.value() == 0.5 => 1.0,
        Normalization::UnitVariance => 1.0 / kernel.variance_constant().sqrt(),
    };
    let n = grid.steps();
    let dt = grid.dt();
    let rows: Vec<Vec<f64>> = (1..=n)
        .into_par_iter()
        .map(|i| {
            let t = grid.time(i);
            (1..=i)
                .map(|j| {
                    let (a, b) = (grid.time(j - 1), grid.time(j));
                    let v = match options.collocation {
                        Collocation::Midpoint => kernel.eval(t, 0.5 * (a + b))?,
                        Collocation::CellRms => cell_rms(&kernel, t, a, b, j == 1, j == i, dt)?,
                    };
                    Ok(v * scale)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let entries: Vec<f64> = rows.into_iter().flatten().collect();
    if let Some(bad) = entries.iter().position(|v| !v.is_finite()) {
        return Err(Error::Domain(format!(
            "non-finite kernel entry at packed index {bad}"
        )));
    }
    Ok(KernelMatrix {
        grid,
        hurst,
        options,
        entries,
    })
}

fn cell_rms(
    kernel: &VolterraKernel,
    t: f64,
    a: f64,
    b: f64,
    touches_origin: bool,
    touches_diagonal: bool,
    dt: f64,
) -> Result<f64> {
    if kernel.hurst == 0.5 {
        return Ok(1.0);
    }
    let err = std::cell::Cell::new(None);
    let square = |s: f64, gap: f64| match kernel.eval_split(t, s, gap) {
        Ok(k) => k * k,
        Err(e) => {
            err.set(Some(e));
            0.0
        }
    };
    let integral = if touches_origin || touches_diagonal {
        // Endpoint singularities s^{1-2H} at the origin and (t-s)^{2H-1} on
        // the diagonal, both evaluated from exact endpoint gaps.
        let scale = square(0.5 * (a + b), t - 0.5 * (a + b)).max(1e-300);
        let f = |s: f64, left: f64, right: f64| {
            let s = if touches_origin { left } else { s };
            let gap = if touches_diagonal { right } else { t - s };
            square(s, gap)
        };
        integrate_tanh_sinh_gaps(f, a, b, 1e-14 * scale * dt)?
    } else {
        gauss_legendre_8(|s| square(s, t - s), a, b)
    };
    if let Some(e) = err.take() {
        return Err(e);
    }
    let mean_sq = integral / dt;
    Ok(mean_sq.sqrt())
}

/// `B(t_i) = sum_{j <= i} K[i][j] (W(t_j) - W(t_{j-1}))`, componentwise.
pub fn du_transform(w: &SamplePath, kernel: &KernelMatrix) -> Result<SamplePath> {
    if w.grid() != kernel.grid() {
        return Err(Error::GridMismatch(format!(
            "driving path has {} steps, kernel {}",
            w.grid().steps(),
            kernel.grid().steps()
        )));
    }
    let d = w.dims();
    let n = w.grid().steps();
    let mut out = SamplePath::zeros(*w.grid(), d);
    let mut dw = vec![0.0; n];
    for k in 0..d {
        for (j, slot) in dw.iter_mut().enumerate() {
            *slot = w.get(j + 1, k) - w.get(j, k);
        }
        for i in 1..=n {
            let v: f64 = kernel.row(i).iter().zip(&dw[..i]).map(|(a, b)| a * b).sum();
            out.set(i, k, v);
        }
    }
    Ok(out)
}
