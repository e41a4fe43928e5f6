//! A complete model configuration and its JSON form.

use serde::{Deserialize, Serialize};

use crate::coefficients::{AffineCoefficients, Coefficients, XiDistribution, XiLaw};
use crate::error::{Error, Result};
use crate::fbm::Hurst;
use crate::grid::TimeGrid;
use crate::market::MarketParams;
use crate::rde::SolveConfig;
use crate::viability::{
    check_viability_conditions, shifted_polyhedron, BoundingBox, CheckMode, CheckOptions,
    ConditionReport, Polyhedron,
};

pub const DEFAULT_RATE: f64 = 0.05;
pub const DEFAULT_HORIZON: f64 = 1.0;
pub const DEFAULT_STEPS: usize = 1024;
/// Half-width of the default box used for boundary checks.
pub const DEFAULT_CHECK_RADIUS: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub market: MarketParams,
    pub coefficients: AffineCoefficients,
    pub xi: XiLaw,
    pub hurst: Hurst,
    pub grid: TimeGrid,
    pub u0: Vec<f64>,
    pub seed: u64,
}

impl Scenario {
    /// The two-dimensional constrained example: `mu = (x, y - xi)`,
    /// `sigma = (x - xi) [[1, 1], [0, -1]]`, `u0 = (1, 0)`, `H = 0.7`, `xi`
    /// with density `∝ exp(-1/x^3)` on `(0, 1]`.
    pub fn reference_example() -> Self {
        Self {
            market: MarketParams::reference_example(DEFAULT_RATE),
            coefficients: AffineCoefficients::reference_example(),
            xi: XiLaw::reference_example(),
            hurst: Hurst::new(0.7).expect("valid Hurst"),
            grid: TimeGrid::new(DEFAULT_HORIZON, DEFAULT_STEPS).expect("valid grid"),
            u0: vec![1.0, 0.0],
            seed: 0,
        }
    }

    /// Zero fields and identity projections, so `V` stays at `u0` and every
    /// asset is a geometric Brownian motion with volatility `u0[k]`.
    pub fn degenerate() -> Self {
        Self {
            market: MarketParams {
                rate: DEFAULT_RATE,
                drift: vec![0.1, 0.02],
                initial_prices: vec![1.0, 1.0],
                riskfree_initial: 1.0,
                projections: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                anchors: vec![0, 1],
            },
            coefficients: AffineCoefficients::zero(2),
            xi: XiLaw::Constant { value: 0.1 },
            hurst: Hurst::new(0.7).expect("valid Hurst"),
            grid: TimeGrid::new(DEFAULT_HORIZON, DEFAULT_STEPS).expect("valid grid"),
            u0: vec![0.5, 0.2],
            seed: 0,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.coefficients.validate()?;
        self.market.validate()?;
        XiDistribution::new(&self.xi)?;
        let d = self.coefficients.dim();
        let assets = self.market.assets();
        if self.u0.len() != d {
            return Err(Error::Scenario(format!("u0 has {} entries, coefficients live in R^{d}", self.u0.len())));
        }
        if self.market.projections[0].len() != d {
            return Err(Error::Scenario(format!(
                "projections have {} entries, state lives in R^{d}",
                self.market.projections[0].len()
            )));
        }
        if self.coefficients.noise_dim() != assets {
            return Err(Error::Scenario(format!(
                "diffusion has {} columns but the market has {assets} Brownian drivers",
                self.coefficients.noise_dim()
            )));
        }
        if self.u0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Scenario("u0 must be finite".into()));
        }
        Ok(())
    }

    pub fn solve_config(&self) -> Result<SolveConfig> {
        SolveConfig::new(self.u0.clone(), self.hurst, self.grid)
    }

    /// `K(xi)`.
    pub fn polyhedron(&self, xi: f64) -> Result<Polyhedron> {
        shifted_polyhedron(&self.market.projections, &self.market.anchors, xi)
    }

    pub fn check_options(&self) -> Result<CheckOptions> {
        let d = self.coefficients.dim();
        Ok(CheckOptions {
            seed: self.seed,
            ..CheckOptions::new(BoundingBox::cube(d, DEFAULT_CHECK_RADIUS)?)
        })
    }

    /// `V = (<h_k, u0>)_k` when both fields vanish identically, so the
    /// volatility never moves and prices are geometric Brownian motions.
    pub fn static_volatility(&self) -> Option<Vec<f64>> {
        let c = &self.coefficients;
        let zero = |v: &[f64]| v.iter().all(|&x| x == 0.0);
        let still = c.drift_matrix.iter().all(|r| zero(r))
            && zero(&c.xi_drift)
            && zero(&c.constant)
            && c.diffusion.iter().all(|col| {
                zero(&col.direction) || (zero(&col.weight) && col.xi_weight == 0.0 && col.offset == 0.0)
            });
        still.then(|| {
            let mut v = vec![0.0; self.market.assets()];
            self.market.vol_into(&self.u0, &mut v);
            v
        })
    }

    /// Boundary checks at the representative levels of the `xi` law.
    pub fn check_conditions(&self, mode: CheckMode, opts: &CheckOptions) -> Result<Vec<ConditionReport>> {
        let dist = XiDistribution::new(&self.xi)?;
        dist.check_points()
            .into_iter()
            .map(|xi| check_viability_conditions(&self.coefficients, &self.polyhedron(xi)?, xi, mode, opts))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid_and_round_trip() {
        for s in [Scenario::reference_example(), Scenario::degenerate()] {
            s.validate().unwrap();
            assert_eq!(Scenario::from_json(&s.to_json()).unwrap(), s);
        }
    }

    #[test]
    fn unknown_fields_are_rejected_with_position() {
        let mut v: serde_json::Value = serde_json::from_str(&Scenario::degenerate().to_json()).unwrap();
        v["market"]["volatility"] = serde_json::json!(1.0);
        let text = serde_json::to_string_pretty(&v).unwrap();
        let err = Scenario::from_json(&text).unwrap_err().to_string();
        assert!(err.contains("unknown field `volatility`") && err.contains("line"), "{err}");
    }

    #[test]
    fn inconsistent_dimensions_are_rejected() {
        let mut s = Scenario::reference_example();
        s.u0 = vec![1.0];
        assert!(s.validate().is_err());
        let mut s = Scenario::reference_example();
        s.coefficients.diffusion.pop();
        for row in &mut s.coefficients.drift_matrix {
            row.truncate(2);
        }
        assert!(s.validate().is_err());
    }

    #[test]
    fn static_volatility_only_for_vanishing_fields() {
        assert_eq!(Scenario::degenerate().static_volatility(), Some(vec![0.5, 0.2]));
        assert_eq!(Scenario::reference_example().static_volatility(), None);
    }

    #[test]
    fn reference_conditions() {
        let s = Scenario::reference_example();
        let opts = s.check_options().unwrap();
        let cone = s.check_conditions(CheckMode::Cone, &opts).unwrap();
        assert_eq!(cone.len(), 5);
        assert!(cone.iter().all(|r| r.passed()));
        let hyper = s.check_conditions(CheckMode::Hyperplane, &opts).unwrap();
        assert!(hyper.iter().all(|r| !r.passed()));
    }
}
