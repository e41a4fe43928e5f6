//! Drift and diffusion fields of the volatility equation and the law of the
//! random level `xi`.
//!
//! The built-in family is affine in the state and in `xi`:
//!
//! ```text
//! mu(xi, x)        = A x + xi beta + c
//! sigma(xi, x)[:,j] = (<w_j, x> + kappa_j xi + rho_j) s_j
//! ```
//!
//! Anything else can be plugged in through the [`Coefficients`] trait.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomSource;
use crate::special::{gauss_legendre_8, integrate_tanh_sinh};

/// State-space fields `mu: R^d -> R^d` and `sigma: R^d -> R^{d x e}`
/// parameterized by `xi`.
pub trait Coefficients: Send + Sync {
    /// State dimension `d`.
    fn dim(&self) -> usize;

    /// Number of driving components `e` (columns of `sigma`).
    fn noise_dim(&self) -> usize;

    fn drift_into(&self, xi: f64, x: &[f64], out: &mut [f64]);

    /// Writes `sigma` row-major into `out` (`d * e` entries).
    fn diffusion_into(&self, xi: f64, x: &[f64], out: &mut [f64]);

    /// The affine representation, when there is one.
    fn as_affine(&self) -> Option<&AffineCoefficients> {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionColumn {
    pub weight: Vec<f64>,
    pub xi_weight: f64,
    pub offset: f64,
    pub direction: Vec<f64>,
}

impl DiffusionColumn {
    pub fn scalar(&self, xi: f64, x: &[f64]) -> f64 {
        dot(&self.weight, x) + self.xi_weight * xi + self.offset
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineCoefficients {
    /// `A`, one row per state component.
    pub drift_matrix: Vec<Vec<f64>>,
    pub xi_drift: Vec<f64>,
    pub constant: Vec<f64>,
    pub diffusion: Vec<DiffusionColumn>,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl AffineCoefficients {
    /// `mu(x, y) = (x, y - xi)` and `sigma(x, y) = (x - xi) [[1, 1], [0, -1]]`.
    pub fn reference_example() -> Self {
        Self {
            drift_matrix: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            xi_drift: vec![0.0, -1.0],
            constant: vec![0.0, 0.0],
            diffusion: vec![
                DiffusionColumn {
                    weight: vec![1.0, 0.0],
                    xi_weight: -1.0,
                    offset: 0.0,
                    direction: vec![1.0, 0.0],
                },
                DiffusionColumn {
                    weight: vec![1.0, 0.0],
                    xi_weight: -1.0,
                    offset: 0.0,
                    direction: vec![1.0, -1.0],
                },
            ],
        }
    }

    /// `mu = 0`, `sigma = 0` in dimension `d`.
    pub fn zero(d: usize) -> Self {
        Self {
            drift_matrix: vec![vec![0.0; d]; d],
            xi_drift: vec![0.0; d],
            constant: vec![0.0; d],
            diffusion: (0..d)
                .map(|_| DiffusionColumn {
                    weight: vec![0.0; d],
                    xi_weight: 0.0,
                    offset: 0.0,
                    direction: vec![0.0; d],
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.drift_matrix.len();
        let dim_err = |what: &str| Err(Error::Dimension(format!("{what} must have {d} entries")));
        if d == 0 {
            return Err(Error::Dimension("drift_matrix is empty".into()));
        }
        if self.drift_matrix.iter().any(|r| r.len() != d) {
            return dim_err("every drift_matrix row");
        }
        if self.xi_drift.len() != d {
            return dim_err("xi_drift");
        }
        if self.constant.len() != d {
            return dim_err("constant");
        }
        if self.diffusion.is_empty() {
            return Err(Error::Dimension("diffusion needs at least one column".into()));
        }
        for (j, c) in self.diffusion.iter().enumerate() {
            if c.weight.len() != d || c.direction.len() != d {
                return dim_err(&format!("diffusion column {j} weight and direction"));
            }
        }
        let finite = self
            .drift_matrix
            .iter()
            .flatten()
            .chain(&self.xi_drift)
            .chain(&self.constant)
            .chain(self.diffusion.iter().flat_map(|c| {
                c.weight
                    .iter()
                    .chain(&c.direction)
                    .chain([&c.xi_weight, &c.offset])
            }))
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Domain("coefficients must be finite".into()));
        }
        Ok(())
    }

    pub fn eval_mu(&self, xi: f64, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.drift_into(xi, x, &mut out);
        out
    }

    /// `sigma(xi, x)` as rows.
    pub fn eval_sigma(&self, xi: f64, x: &[f64]) -> Vec<Vec<f64>> {
        let (d, e) = (self.dim(), self.noise_dim());
        let mut flat = vec![0.0; d * e];
        self.diffusion_into(xi, x, &mut flat);
        flat.chunks(e).map(|r| r.to_vec()).collect()
    }
}

impl Coefficients for AffineCoefficients {
    fn dim(&self) -> usize {
        self.drift_matrix.len()
    }

    fn noise_dim(&self) -> usize {
        self.diffusion.len()
    }

    fn drift_into(&self, xi: f64, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(&self.drift_matrix[i], x) + xi * self.xi_drift[i] + self.constant[i];
        }
    }

    fn diffusion_into(&self, xi: f64, x: &[f64], out: &mut [f64]) {
        let e = self.diffusion.len();
        for (j, col) in self.diffusion.iter().enumerate() {
            let scalar = col.scalar(xi, x);
            for (i, s) in col.direction.iter().enumerate() {
                out[i * e + j] = scalar * s;
            }
        }
    }

    fn as_affine(&self) -> Option<&AffineCoefficients> {
        Some(self)
    }
}

type Field = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;

/// User-supplied fields. The viability checker can only sample these.
#[derive(Clone)]
pub struct FieldCoefficients {
    dim: usize,
    noise_dim: usize,
    drift: std::sync::Arc<Field>,
    diffusion: std::sync::Arc<Field>,
}

impl FieldCoefficients {
    /// `drift(xi, x, out)` writes `mu`; `diffusion(xi, x, out)` writes
    /// `sigma` row-major as a `dim x noise_dim` matrix.
    pub fn new<M, S>(dim: usize, noise_dim: usize, drift: M, diffusion: S) -> Self
    where
        M: Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
        S: Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self {
            dim,
            noise_dim,
            drift: std::sync::Arc::new(drift),
            diffusion: std::sync::Arc::new(diffusion),
        }
    }
}

impl std::fmt::Debug for FieldCoefficients {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FieldCoefficients")
            .field("dim", &self.dim)
            .field("noise_dim", &self.noise_dim)
            .finish_non_exhaustive()
    }
}

impl Coefficients for FieldCoefficients {
    fn dim(&self) -> usize {
        self.dim
    }

    fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    fn drift_into(&self, xi: f64, x: &[f64], out: &mut [f64]) {
        (self.drift)(xi, x, out)
    }

    fn diffusion_into(&self, xi: f64, x: &[f64], out: &mut [f64]) {
        (self.diffusion)(xi, x, out)
    }
}

/// Law of the `F_0`-measurable level `xi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum XiLaw {
    Constant { value: f64 },
    /// Density `lambda_1 exp(-scale / x^exponent)` on `(0, cutoff]`.
    SingularDensity { exponent: u32, scale: f64, cutoff: f64 },
}

impl XiLaw {
    pub fn reference_example() -> Self {
        XiLaw::SingularDensity {
            exponent: 3,
            scale: 1.0,
            cutoff: 1.0,
        }
    }

    /// Upper end `m` of the support.
    pub fn upper_bound(&self) -> f64 {
        match *self {
            XiLaw::Constant { value } => value,
            XiLaw::SingularDensity { cutoff, .. } => cutoff,
        }
    }
}

/// `lambda_1` such that `lambda_1 int_0^cutoff exp(-scale / x^n) dx = 1`.
pub fn xi_normalizer(exponent: u32, scale: f64, cutoff: f64) -> Result<f64> {
    check_density_params(exponent, scale, cutoff)?;
    let mass = integrate_tanh_sinh(
        |x| unnormalized_density(x, exponent, scale),
        0.0,
        cutoff,
        1e-14 * cutoff,
    )?;
    if !(mass > 0.0) {
        return Err(Error::Quadrature(format!(
            "density mass underflows (scale {scale}, exponent {exponent}, cutoff {cutoff})"
        )));
    }
    Ok(1.0 / mass)
}

fn check_density_params(exponent: u32, scale: f64, cutoff: f64) -> Result<()> {
    if exponent < 2 {
        return Err(Error::Domain(format!("density exponent must be >= 2, got {exponent}")));
    }
    if !(scale > 0.0 && scale.is_finite()) || !(cutoff > 0.0 && cutoff.is_finite()) {
        return Err(Error::Domain(format!(
            "density scale and cutoff must be positive, got {scale} and {cutoff}"
        )));
    }
    Ok(())
}

pub(crate) fn unnormalized_density(x: f64, exponent: u32, scale: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (-scale / x.powi(exponent as i32)).exp()
    }
}

/// Number of intervals in the tabulated CDF.
pub const CDF_TABLE_SIZE: usize = 1 << 14;
const BISECTION_TOLERANCE: f64 = 1e-12;

/// A validated [`XiLaw`] ready for sampling.
#[derive(Debug, Clone)]
pub struct XiDistribution {
    law: XiLaw,
    kind: XiKind,
}

#[derive(Debug, Clone)]
enum XiKind {
    Constant(f64),
    Density(DensityTable),
}

#[derive(Debug, Clone)]
struct DensityTable {
    exponent: u32,
    scale: f64,
    cutoff: f64,
    normalizer: f64,
    /// Raw mass of the tabulated density (sum of the cell integrals).
    mass: f64,
    /// CDF at `x_j = j * cutoff / CDF_TABLE_SIZE`.
    cdf: Vec<f64>,
}

impl DensityTable {
    fn new(exponent: u32, scale: f64, cutoff: f64) -> Result<Self> {
        let normalizer = xi_normalizer(exponent, scale, cutoff)?;
        let h = cutoff / CDF_TABLE_SIZE as f64;
        let f = |x: f64| unnormalized_density(x, exponent, scale);
        let mut cdf = Vec::with_capacity(CDF_TABLE_SIZE + 1);
        let mut acc = 0.0;
        cdf.push(0.0);
        for j in 0..CDF_TABLE_SIZE {
            acc += gauss_legendre_8(f, j as f64 * h, (j + 1) as f64 * h);
            cdf.push(acc);
        }
        for v in cdf.iter_mut() {
            *v /= acc;
        }
        Ok(Self {
            exponent,
            scale,
            cutoff,
            normalizer,
            mass: acc,
            cdf,
        })
    }

    fn node(&self, j: usize) -> f64 {
        self.cutoff * j as f64 / CDF_TABLE_SIZE as f64
    }

    fn cdf_at(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= self.cutoff {
            return 1.0;
        }
        let h = self.cutoff / CDF_TABLE_SIZE as f64;
        let j = ((x / h) as usize).min(CDF_TABLE_SIZE - 1);
        let lo = self.node(j);
        let partial = gauss_legendre_8(|y| unnormalized_density(y, self.exponent, self.scale), lo, x);
        (self.cdf[j] + partial / self.mass).min(1.0)
    }

    fn quantile(&self, u: f64) -> f64 {
        // Bracket in the table, then bisect the exact CDF.
        let j = self.cdf.partition_point(|&c| c < u).clamp(1, CDF_TABLE_SIZE);
        let (mut lo, mut hi) = (self.node(j - 1), self.node(j));
        while hi - lo > BISECTION_TOLERANCE {
            let mid = 0.5 * (lo + hi);
            if self.cdf_at(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

impl XiDistribution {
    pub fn new(law: &XiLaw) -> Result<Self> {
        let kind = match *law {
            XiLaw::Constant { value } => {
                if !(value > 0.0 && value.is_finite()) {
                    return Err(Error::Domain(format!("constant xi must be positive, got {value}")));
                }
                XiKind::Constant(value)
            }
            XiLaw::SingularDensity {
                exponent,
                scale,
                cutoff,
            } => XiKind::Density(DensityTable::new(exponent, scale, cutoff)?),
        };
        Ok(Self {
            law: law.clone(),
            kind,
        })
    }

    pub fn law(&self) -> &XiLaw {
        &self.law
    }

    /// `lambda_1` for the singular density.
    pub fn normalizer(&self) -> Option<f64> {
        match &self.kind {
            XiKind::Constant(_) => None,
            XiKind::Density(t) => Some(t.normalizer),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match &self.kind {
            XiKind::Constant(m) => {
                if x >= *m {
                    1.0
                } else {
                    0.0
                }
            }
            XiKind::Density(t) => t.cdf_at(x),
        }
    }

    pub fn quantile(&self, u: f64) -> f64 {
        match &self.kind {
            XiKind::Constant(m) => *m,
            XiKind::Density(t) => t.quantile(u),
        }
    }

    pub fn sample(&self, rng: &mut RandomSource) -> f64 {
        match &self.kind {
            XiKind::Constant(m) => *m,
            XiKind::Density(t) => t.quantile(rng.uniform()).clamp(f64::MIN_POSITIVE, t.cutoff),
        }
    }

    /// Representative levels at which `xi`-dependent conditions are checked.
    pub fn check_points(&self) -> Vec<f64> {
        match &self.kind {
            XiKind::Constant(m) => vec![*m],
            XiKind::Density(t) => [1e-3, 0.05, 0.5, 0.95]
                .iter()
                .map(|&u| t.quantile(u))
                .chain([t.cutoff])
                .collect(),
        }
    }
}

pub fn xi_sample(dist: &XiDistribution, rng: &mut RandomSource) -> f64 {
    dist.sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-14;

    #[test]
    fn reference_fields_match_closed_form() {
        let c = AffineCoefficients::reference_example();
        c.validate().unwrap();
        for &(xi, x, y) in &[(0.3, 1.2, -0.4), (0.9, 0.5, 2.0), (0.1, -1.0, 0.0)] {
            let mu = c.eval_mu(xi, &[x, y]);
            assert!((mu[0] - x).abs() < TOL && (mu[1] - (y - xi)).abs() < TOL);
            let s = c.eval_sigma(xi, &[x, y]);
            let f = x - xi;
            let expected = [[f, f], [0.0, -f]];
            for i in 0..2 {
                for j in 0..2 {
                    assert!((s[i][j] - expected[i][j]).abs() < TOL);
                }
            }
        }
    }

    #[test]
    fn zero_state_zero_drift() {
        let mut c = AffineCoefficients::reference_example();
        c.xi_drift = vec![0.3, 0.1];
        assert_eq!(c.eval_mu(0.0, &[0.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn validate_rejects_inconsistent_dimensions() {
        let mut c = AffineCoefficients::reference_example();
        c.constant = vec![0.0];
        assert!(c.validate().is_err());
        let mut c = AffineCoefficients::reference_example();
        c.diffusion[1].direction = vec![1.0];
        assert!(c.validate().is_err());
        let mut c = AffineCoefficients::reference_example();
        c.drift_matrix[0][1] = f64::NAN;
        assert!(c.validate().is_err());
    }

    #[test]
    fn reference_normalizer() {
        let l = xi_normalizer(3, 1.0, 1.0).unwrap();
        assert!((l - 15.7604).abs() < 1e-3, "{l}");
    }

    #[test]
    fn small_scale_tends_to_uniform() {
        let l = xi_normalizer(3, 1e-9, 1.0).unwrap();
        assert!((l - 1.0).abs() < 1e-2);
    }

    #[test]
    fn normalizer_matches_riemann_sum() {
        let n = 1_000_000;
        let h = 1.0 / n as f64;
        let riemann: f64 = (0..n)
            .map(|i| (-1.0 / ((i as f64 + 0.5) * h).powi(2)).exp())
            .sum::<f64>()
            * h;
        let l = xi_normalizer(2, 1.0, 1.0).unwrap();
        assert!((l * riemann - 1.0).abs() < 1e-6);
    }

    #[test]
    fn bad_density_parameters() {
        assert!(xi_normalizer(1, 1.0, 1.0).is_err());
        assert!(xi_normalizer(3, 0.0, 1.0).is_err());
        assert!(xi_normalizer(3, 1.0, -1.0).is_err());
        assert!(XiDistribution::new(&XiLaw::Constant { value: 0.0 }).is_err());
    }

    #[test]
    fn constant_law_is_degenerate() {
        let d = XiDistribution::new(&XiLaw::Constant { value: 0.2 }).unwrap();
        let mut rng = RandomSource::new(1);
        assert!((0..100).all(|_| xi_sample(&d, &mut rng) == 0.2));
        assert_eq!(d.check_points(), vec![0.2]);
    }

    #[test]
    fn xi_law_json_shape() {
        let law: XiLaw =
            serde_json::from_str(r#"{"kind":"singular_density","exponent":3,"scale":1.0,"cutoff":1.0}"#)
                .unwrap();
        assert_eq!(law, XiLaw::reference_example());
        assert!(serde_json::from_str::<XiLaw>(r#"{"kind":"constant","value":1.0,"extra":2}"#).is_err());
    }

    #[test]
    fn empirical_cdf_matches_quadrature() {
        let d = XiDistribution::new(&XiLaw::reference_example()).unwrap();
        let n = 100_000;
        let mut rng = RandomSource::new(2024);
        let draws: Vec<f64> = (0..n).map(|_| xi_sample(&d, &mut rng)).collect();
        assert!(draws.iter().all(|&x| x > 0.0 && x <= 1.0));
        let lambda = d.normalizer().unwrap();
        for &x in &[0.4, 0.6, 0.8] {
            let exact = lambda * integrate_tanh_sinh(|u| (-1.0 / u.powi(3)).exp(), 0.0, x, 1e-15).unwrap();
            assert!((d.cdf(x) - exact).abs() < 1e-9);
            let p = draws.iter().filter(|&&v| v <= x).count() as f64 / n as f64;
            let se = (exact * (1.0 - exact) / n as f64).sqrt();
            assert!((p - exact).abs() < 3.0 * se, "x={x} p={p} exact={exact}");
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        let d = XiDistribution::new(&XiLaw::reference_example()).unwrap();
        for &u in &[1e-6, 0.01, 0.3, 0.5, 0.77, 0.999] {
            assert!((d.cdf(d.quantile(u)) - u).abs() < 1e-9, "u={u}");
        }
    }

    #[test]
    fn exponential_moments_are_finite() {
        let lambda = xi_normalizer(3, 1.0, 1.0).unwrap();
        for &q in &[0.1, 1.0] {
            let m = integrate_tanh_sinh(
                |x| lambda * (q / (x * x) - 1.0 / x.powi(3)).exp(),
                0.0,
                1.0,
                1e-13,
            )
            .unwrap();
            // exp(q / x^2) >= e^q on (0, 1]
            assert!(m.is_finite() && m >= q.exp() - 1e-9, "q={q} m={m}");
        }
    }

    #[test]
    fn random_coefficients_match_re_expansion() {
        let mut rng = RandomSource::new(99);
        let mut u = || 4.0 * rng.uniform() - 2.0;
        let d = 3;
        let c = AffineCoefficients {
            drift_matrix: (0..d).map(|_| (0..d).map(|_| u()).collect()).collect(),
            xi_drift: (0..d).map(|_| u()).collect(),
            constant: (0..d).map(|_| u()).collect(),
            diffusion: (0..d)
                .map(|_| DiffusionColumn {
                    weight: (0..d).map(|_| u()).collect(),
                    xi_weight: u(),
                    offset: u(),
                    direction: (0..d).map(|_| u()).collect(),
                })
                .collect(),
        };
        c.validate().unwrap();
        for _ in 0..5 {
            let xi = u().abs();
            let x: Vec<f64> = (0..d).map(|_| u()).collect();
            let mu = c.eval_mu(xi, &x);
            let sigma = c.eval_sigma(xi, &x);
            for i in 0..d {
                let mut m = c.constant[i] + c.xi_drift[i] * xi;
                for k in 0..d {
                    m += c.drift_matrix[i][k] * x[k];
                }
                assert!((mu[i] - m).abs() < 1e-12);
                for j in 0..d {
                    let col = &c.diffusion[j];
                    let mut scalar = col.offset + col.xi_weight * xi;
                    for k in 0..d {
                        scalar += col.weight[k] * x[k];
                    }
                    assert!((sigma[i][j] - scalar * col.direction[i]).abs() < 1e-12);
                }
            }
            // column j stays parallel to its direction
            for j in 0..d {
                let dir = &c.diffusion[j].direction;
                let col: Vec<f64> = (0..d).map(|i| sigma[i][j]).collect();
                let cross = col[0] * dir[1] - col[1] * dir[0];
                assert!(cross.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn field_coefficients_delegate() {
        let f = FieldCoefficients::new(
            1,
            1,
            |xi, x, out| out[0] = x[0] - xi,
            |_, x, out| out[0] = 2.0 * x[0],
        );
        let mut out = [0.0];
        f.drift_into(0.5, &[2.0], &mut out);
        assert_eq!(out[0], 1.5);
        f.diffusion_into(0.5, &[2.0], &mut out);
        assert_eq!(out[0], 4.0);
        assert!(f.as_affine().is_none());
    }
}
