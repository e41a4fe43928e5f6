//! Fractional Brownian motion: covariance, exact samplers and p-variation.
//!
//! Two samplers are provided. [`CholeskySampler`] factors the full covariance
//! of `(B(t_1), ..., B(t_n))` and is exact for any grid; it costs `O(n^3)` to
//! set up and serves mainly as a reference. [`WoodChanSampler`] embeds the
//! fractional Gaussian noise autocovariance in a `2n` circulant matrix and
//! samples through the FFT in `O(n log n)`.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{SamplePath, TimeGrid};
use crate::rng::RandomSource;

/// Hurst index, strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Hurst(f64);

impl Hurst {
    pub fn new(h: f64) -> Result<Self> {
        if h > 0.0 && h < 1.0 {
            Ok(Self(h))
        } else {
            Err(Error::Domain(format!(
                "Hurst parameter must lie in (0, 1), got {h}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Hurst {
    type Error = Error;

    fn try_from(h: f64) -> Result<Self> {
        Hurst::new(h)
    }
}

impl From<Hurst> for f64 {
    fn from(h: Hurst) -> f64 {
        h.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FbmConfig {
    pub hurst: Hurst,
    pub dims: usize,
    pub seed: u64,
}

/// `Cov(B(s), B(t)) = (s^{2H} + t^{2H} - |t - s|^{2H}) / 2`.
pub fn fbm_cov(s: f64, t: f64, hurst: f64) -> Result<f64> {
    let h = Hurst::new(hurst)?;
    if s < 0.0 || t < 0.0 {
        return Err(Error::Domain(format!(
            "fbm covariance needs non-negative times, got ({s}, {t})"
        )));
    }
    Ok(cov_unchecked(s, t, h.0))
}

fn cov_unchecked(s: f64, t: f64, h: f64) -> f64 {
    let e = 2.0 * h;
    0.5 * (s.powf(e) + t.powf(e) - (t - s).abs().powf(e))
}

/// Autocovariance of unit-step fractional Gaussian noise at lag `k`.
pub fn fgn_autocov(k: usize, hurst: f64) -> f64 {
    let e = 2.0 * hurst;
    let k = k as f64;
    0.5 * ((k + 1.0).powf(e) - 2.0 * k.powf(e) + (k - 1.0).abs().powf(e))
}

/// A sampler of one scalar fBm component on a fixed grid.
pub trait FbmSampler: Send + Sync {
    fn grid(&self) -> &TimeGrid;

    /// Values at `t_0..=t_n`, starting at 0.
    fn sample_component(&self, rng: &mut RandomSource) -> Vec<f64>;

    /// A `dims`-dimensional path of independent components; component `k`
    /// of path `path_index` draws from its own stream.
    fn sample_path(&self, dims: usize, seed: u64, path_index: u64) -> SamplePath {
        let columns: Vec<Vec<f64>> = (0..dims as u64)
            .map(|k| {
                let mut rng = RandomSource::for_stream(seed, path_index, k);
                self.sample_component(&mut rng)
            })
            .collect();
        SamplePath::from_columns(*self.grid(), &columns).expect("sampler column length")
    }
}

/// Exact sampler from the lower Cholesky factor of the covariance matrix.
#[derive(Debug, Clone)]
pub struct CholeskySampler {
    grid: TimeGrid,
    /// Packed lower triangle, row `i` holds `i + 1` entries.
    factor: Vec<f64>,
}

impl CholeskySampler {
    pub fn new(grid: TimeGrid, hurst: Hurst) -> Result<Self> {
        let n = grid.steps();
        let h = hurst.value();
        let mut cov = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let c = cov_unchecked(grid.time(i + 1), grid.time(j + 1), h);
                cov[i * n + j] = c;
                cov[j * n + i] = c;
            }
        }
        let factor = cholesky_packed(&cov, n)?;
        Ok(Self { grid, factor })
    }
}

/// Cholesky factorization of a dense symmetric `n x n` matrix into a packed
/// lower triangle.
pub(crate) fn cholesky_packed(a: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; n * (n + 1) / 2];
    let idx = |i: usize, j: usize| i * (i + 1) / 2 + j;
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[idx(i, k)] * l[idx(j, k)];
            }
            if i == j {
                if !(sum > 0.0) || !sum.is_finite() {
                    return Err(Error::NotPositiveDefinite {
                        minor: i + 1,
                        pivot: sum,
                    });
                }
                l[idx(i, i)] = sum.sqrt();
            } else {
                l[idx(i, j)] = sum / l[idx(j, j)];
            }
        }
    }
    Ok(l)
}

impl FbmSampler for CholeskySampler {
    fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    fn sample_component(&self, rng: &mut RandomSource) -> Vec<f64> {
        let n = self.grid.steps();
        let mut z = vec![0.0; n];
        rng.fill_gaussian(&mut z);
        let mut out = Vec::with_capacity(n + 1);
        out.push(0.0);
        let mut offset = 0;
        for i in 0..n {
            let row = &self.factor[offset..offset + i + 1];
            out.push(row.iter().zip(&z).map(|(l, z)| l * z).sum());
            offset += i + 1;
        }
        out
    }
}

/// Relative size below which negative circulant eigenvalues count as rounding.
pub const EIGENVALUE_CLIP_TOLERANCE: f64 = 1e-12;

/// Circulant-embedding (Wood-Chan) sampler.
#[derive(Clone)]
pub struct WoodChanSampler {
    grid: TimeGrid,
    scale: f64,
    /// `sqrt(lambda_k / 2n)` for the embedding eigenvalues.
    weights: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for WoodChanSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WoodChanSampler")
            .field("grid", &self.grid)
            .field("embedding", &self.weights.len())
            .finish()
    }
}

impl WoodChanSampler {
    pub fn new(grid: TimeGrid, hurst: Hurst) -> Result<Self> {
        let eig = circulant_eigenvalues(grid.steps(), hurst.value());
        let m = eig.len();
        let max = eig.iter().cloned().fold(f64::MIN, f64::max);
        let min = eig.iter().cloned().fold(f64::MAX, f64::min);
        if min < 0.0 {
            if -min > EIGENVALUE_CLIP_TOLERANCE * max {
                return Err(Error::NegativeEigenvalue {
                    min_eigenvalue: min,
                    max_eigenvalue: max,
                });
            }
            log::warn!("clipping circulant eigenvalue {min:e} to zero (max {max:e})");
        }
        let weights = eig
            .iter()
            .map(|&l| (l.max(0.0) / m as f64).sqrt())
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(m);
        Ok(Self {
            grid,
            scale: grid.dt().powf(hurst.value()),
            weights,
            fft,
        })
    }
}

/// Eigenvalues of the `2n` circulant with first row
/// `[g(0), ..., g(n-1), g(n), g(n-1), ..., g(1)]`.
pub fn circulant_eigenvalues(n: usize, hurst: f64) -> Vec<f64> {
    let m = 2 * n;
    let mut row: Vec<Complex64> = (0..m)
        .map(|k| {
            let lag = if k <= n { k } else { m - k };
            Complex64::new(fgn_autocov(lag, hurst), 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut row);
    row.into_iter().map(|c| c.re).collect()
}

impl FbmSampler for WoodChanSampler {
    fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    fn sample_component(&self, rng: &mut RandomSource) -> Vec<f64> {
        let n = self.grid.steps();
        let mut buf: Vec<Complex64> = self
            .weights
            .iter()
            .map(|&w| {
                let re = rng.gaussian();
                let im = rng.gaussian();
                Complex64::new(w * re, w * im)
            })
            .collect();
        self.fft.process(&mut buf);
        let mut out = Vec::with_capacity(n + 1);
        let mut acc = 0.0;
        out.push(0.0);
        for c in &buf[..n] {
            acc += self.scale * c.re;
            out.push(acc);
        }
        out
    }
}

/// One exact Cholesky path. Builds the factor on every call; prefer
/// [`CholeskySampler`] for repeated sampling.
pub fn cholesky_sample(grid: TimeGrid, cfg: &FbmConfig, path_index: u64) -> Result<SamplePath> {
    Ok(CholeskySampler::new(grid, cfg.hurst)?.sample_path(cfg.dims, cfg.seed, path_index))
}

pub fn wood_chan_sample(grid: TimeGrid, cfg: &FbmConfig, path_index: u64) -> Result<SamplePath> {
    Ok(WoodChanSampler::new(grid, cfg.hurst)?.sample_path(cfg.dims, cfg.seed, path_index))
}

/// Grid p-variation of a scalar sequence: the maximum over all
/// subsequences containing both endpoints of `(sum |increment|^p)^{1/p}`.
pub fn p_variation_of(values: &[f64], p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::Domain(format!("p-variation needs p >= 1, got {p}")));
    }
    if values.len() < 2 {
        return Ok(0.0);
    }
    // best[j]: largest sum over dissections of [t_0, t_j] ending at t_j.
    let mut best = vec![0.0f64; values.len()];
    for j in 1..values.len() {
        best[j] = (0..j)
            .map(|i| best[i] + (values[j] - values[i]).abs().powf(p))
            .fold(0.0, f64::max);
    }
    Ok(best[values.len() - 1].powf(1.0 / p))
}

pub fn p_variation(path: &SamplePath, p: f64, component: usize) -> Result<f64> {
    if component >= path.dims() {
        return Err(Error::Dimension(format!(
            "component {component} out of range for a {}-dimensional path",
            path.dims()
        )));
    }
    p_variation_of(&path.component(component), p)
}
