//! Explicit Euler scheme for `dU = mu(xi, U) dt + sigma(xi, U) dB`,
//! valid in the Young regime `H > 1/2`.

use serde::{Deserialize, Serialize};

use crate::coefficients::Coefficients;
use crate::error::{Error, Result};
use crate::fbm::{FbmSampler, Hurst, WoodChanSampler};
use crate::grid::{SamplePath, TimeGrid};
use crate::viability::Polyhedron;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub initial: Vec<f64>,
    pub hurst: Hurst,
    pub grid: TimeGrid,
}

impl SolveConfig {
    pub fn new(initial: Vec<f64>, hurst: Hurst, grid: TimeGrid) -> Result<Self> {
        if hurst.value() <= 0.5 {
            return Err(Error::RoughRegime(hurst.value()));
        }
        if initial.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("initial state must be finite".into()));
        }
        Ok(Self {
            initial,
            hurst,
            grid,
        })
    }
}

/// Scratch space for repeated Euler steps.
#[derive(Debug, Clone)]
pub struct EulerStepper {
    mu: Vec<f64>,
    sigma: Vec<f64>,
    noise_dim: usize,
}

impl EulerStepper {
    pub fn new(coeffs: &dyn Coefficients) -> Self {
        Self {
            mu: vec![0.0; coeffs.dim()],
            sigma: vec![0.0; coeffs.dim() * coeffs.noise_dim()],
            noise_dim: coeffs.noise_dim(),
        }
    }

    /// `x <- x + mu(xi, x) dt + sigma(xi, x) db`.
    pub fn step(&mut self, coeffs: &dyn Coefficients, xi: f64, x: &mut [f64], dt: f64, db: &[f64]) {
        coeffs.drift_into(xi, x, &mut self.mu);
        coeffs.diffusion_into(xi, x, &mut self.sigma);
        let e = self.noise_dim;
        for (i, xi_) in x.iter_mut().enumerate() {
            let row = &self.sigma[i * e..(i + 1) * e];
            *xi_ += self.mu[i] * dt + row.iter().zip(db).map(|(s, b)| s * b).sum::<f64>();
        }
    }
}

pub fn euler_solve(
    coeffs: &dyn Coefficients,
    xi: f64,
    b: &SamplePath,
    cfg: &SolveConfig,
) -> Result<SamplePath> {
    euler_solve_with(coeffs, xi, b, cfg, None)
}

/// Euler scheme with an optional Euclidean projection onto `project`
/// after every step.
pub fn euler_solve_with(
    coeffs: &dyn Coefficients,
    xi: f64,
    b: &SamplePath,
    cfg: &SolveConfig,
    project: Option<&Polyhedron>,
) -> Result<SamplePath> {
    if cfg.hurst.value() <= 0.5 {
        return Err(Error::RoughRegime(cfg.hurst.value()));
    }
    let d = coeffs.dim();
    let e = coeffs.noise_dim();
    if cfg.initial.len() != d {
        return Err(Error::Dimension(format!(
            "initial state has {} entries, coefficients live in R^{d}",
            cfg.initial.len()
        )));
    }
    if b.dims() != e {
        return Err(Error::Dimension(format!(
            "driver has {} components, diffusion has {e} columns",
            b.dims()
        )));
    }
    if b.grid() != &cfg.grid {
        return Err(Error::GridMismatch(format!(
            "driver grid {:?} differs from solver grid {:?}",
            b.grid(),
            cfg.grid
        )));
    }
    let grid = cfg.grid;
    let dt = grid.dt();
    let mut out = SamplePath::zeros(grid, d);
    let mut x = cfg.initial.clone();
    out.row_mut(0).copy_from_slice(&x);
    let mut stepper = EulerStepper::new(coeffs);
    let mut db = vec![0.0; e];
    for i in 0..grid.steps() {
        let (now, next) = (b.row(i), b.row(i + 1));
        for (dbj, (a, c)) in db.iter_mut().zip(now.iter().zip(next)) {
            *dbj = c - a;
        }
        stepper.step(coeffs, xi, &mut x, dt, &db);
        if let Some(poly) = project {
            x = poly.project(&x)?;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: i + 1 });
        }
        out.row_mut(i + 1).copy_from_slice(&x);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeLevel {
    /// Step of the coarser of the two compared levels.
    pub dt: f64,
    /// Sup-norm difference over the coarser grid.
    pub difference: f64,
}

/// Self-convergence of the scheme on nested grids.
///
/// One fBm path is drawn on `cfg.grid` (the finest level); coarser levels
/// subsample it by factors of two. Returns `levels - 1` entries, coarsest
/// pair first.
pub fn convergence_probe(
    coeffs: &dyn Coefficients,
    xi: f64,
    cfg: &SolveConfig,
    seed: u64,
    levels: usize,
) -> Result<Vec<ProbeLevel>> {
    if levels < 2 {
        return Err(Error::Domain(format!("convergence probe needs at least 2 levels, got {levels}")));
    }
    let finest = cfg.grid;
    let top = 1usize << (levels - 1);
    if finest.steps() % top != 0 {
        return Err(Error::Domain(format!(
            "{} steps cannot be halved {} times",
            finest.steps(),
            levels - 1
        )));
    }
    let sampler = WoodChanSampler::new(finest, cfg.hurst)?;
    let b = sampler.sample_path(coeffs.noise_dim(), seed, 0);
    let mut solutions = Vec::with_capacity(levels);
    for level in 0..levels {
        let stride = top >> level;
        let coarse = b.subsample(stride)?;
        let level_cfg = SolveConfig {
            grid: *coarse.grid(),
            ..cfg.clone()
        };
        solutions.push(euler_solve(coeffs, xi, &coarse, &level_cfg)?);
    }
    Ok(solutions
        .windows(2)
        .map(|pair| {
            let (coarse, fine) = (&pair[0], &pair[1]);
            let difference = (0..coarse.grid().len())
                .flat_map(|i| {
                    coarse
                        .row(i)
                        .iter()
                        .zip(fine.row(2 * i))
                        .map(|(a, b)| (a - b).abs())
                })
                .fold(0.0, f64::max);
            ProbeLevel {
                dt: coarse.grid().dt(),
                difference,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{AffineCoefficients, DiffusionColumn};

    fn linear() -> AffineCoefficients {
        let mut c = AffineCoefficients::zero(2);
        c.drift_matrix = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        c
    }

    fn constant_sigma() -> AffineCoefficients {
        let mut c = AffineCoefficients::zero(2);
        c.diffusion = vec![
            DiffusionColumn {
                weight: vec![0.0, 0.0],
                xi_weight: 0.0,
                offset: 0.7,
                direction: vec![1.0, 2.0],
            },
            DiffusionColumn {
                weight: vec![0.0, 0.0],
                xi_weight: 0.0,
                offset: -0.3,
                direction: vec![0.5, 1.0],
            },
        ];
        c
    }

    fn cfg(steps: usize) -> SolveConfig {
        SolveConfig::new(
            vec![1.0, 0.0],
            Hurst::new(0.7).unwrap(),
            TimeGrid::new(1.0, steps).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn rough_regime_is_rejected() {
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let err = SolveConfig::new(vec![0.0], Hurst::new(0.5).unwrap(), grid).unwrap_err();
        assert_eq!(err, Error::RoughRegime(0.5));
    }

    #[test]
    fn linear_drift_is_first_order() {
        let c = linear();
        let errors: Vec<f64> = [64, 128, 256, 512]
            .iter()
            .map(|&n| {
                let cfg = cfg(n);
                let b = SamplePath::zeros(cfg.grid, 2);
                let u = euler_solve(&c, 0.0, &b, &cfg).unwrap();
                (u.get(n, 0) - 1f64.exp()).abs()
            })
            .collect();
        for w in errors.windows(2) {
            let ratio = w[0] / w[1];
            assert!((ratio - 2.0).abs() < 0.05, "{errors:?}");
        }
    }

    #[test]
    fn zero_fields_keep_the_initial_state() {
        let c = AffineCoefficients::zero(2);
        let cfg = cfg(16);
        let b = WoodChanSampler::new(cfg.grid, cfg.hurst).unwrap().sample_path(2, 3, 0);
        let u = euler_solve(&c, 0.4, &b, &cfg).unwrap();
        assert!(u.rows().all(|r| r == [1.0, 0.0]));
    }

    #[test]
    fn constant_sigma_telescopes() {
        let c = constant_sigma();
        let cfg = cfg(32);
        let b = WoodChanSampler::new(cfg.grid, cfg.hurst).unwrap().sample_path(2, 5, 0);
        let u = euler_solve(&c, 0.0, &b, &cfg).unwrap();
        for i in 0..=32 {
            let (b1, b2) = (b.get(i, 0), b.get(i, 1));
            let x = 1.0 + 0.7 * b1 - 0.15 * b2;
            let y = 1.4 * b1 - 0.3 * b2;
            assert!((u.get(i, 0) - x).abs() < 1e-12 && (u.get(i, 1) - y).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_state_names_the_step() {
        let mut c = linear();
        c.drift_matrix = vec![vec![1e300, 0.0], vec![0.0, 0.0]];
        let cfg = cfg(8);
        let b = SamplePath::zeros(cfg.grid, 2);
        match euler_solve(&c, 0.0, &b, &cfg) {
            Err(Error::NonFinite { step }) => assert!(step >= 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mismatched_inputs() {
        let c = linear();
        let cfg = cfg(8);
        assert!(matches!(
            euler_solve(&c, 0.0, &SamplePath::zeros(cfg.grid, 3), &cfg),
            Err(Error::Dimension(_))
        ));
        let other = TimeGrid::new(2.0, 8).unwrap();
        assert!(matches!(
            euler_solve(&c, 0.0, &SamplePath::zeros(other, 2), &cfg),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn probe_on_linear_problem_halves() {
        let probe = convergence_probe(&linear(), 0.0, &cfg(1024), 1, 4).unwrap();
        assert_eq!(probe.len(), 3);
        for w in probe.windows(2) {
            let ratio = w[0].difference / w[1].difference;
            assert!((ratio - 2.0).abs() < 0.1, "{probe:?}");
        }
    }

    #[test]
    fn probe_on_constant_sigma_is_exact() {
        let probe = convergence_probe(&constant_sigma(), 0.0, &cfg(256), 2, 3).unwrap();
        assert!(probe.iter().all(|p| p.difference < 1e-12), "{probe:?}");
    }

    #[test]
    fn probe_on_reference_example_decreases() {
        let c = AffineCoefficients::reference_example();
        let probe = convergence_probe(&c, 0.5, &cfg(4096), 11, 4).unwrap();
        for w in probe.windows(2) {
            assert!(w[1].difference < w[0].difference, "{probe:?}");
        }
    }

    #[test]
    fn projection_keeps_the_state_feasible() {
        let c = AffineCoefficients::reference_example();
        let cfg = cfg(256);
        let xi = 0.6;
        let poly = crate::viability::shifted_polyhedron(&[vec![1.0, 1.0], vec![1.0, 0.0]], &[0, 0], xi).unwrap();
        let b = WoodChanSampler::new(cfg.grid, cfg.hurst).unwrap().sample_path(2, 9, 0);
        let u = euler_solve_with(&c, xi, &b, &cfg, Some(&poly)).unwrap();
        assert!(u.rows().all(|r| poly.contains(r, 1e-12)));
    }
}
