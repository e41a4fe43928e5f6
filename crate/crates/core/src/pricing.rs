//! Monte Carlo prices of European claims at t = 0.
//!
//! Two estimators of `E*[e^{-rT} h(S(T))]`:
//!
//! * [`Estimator::Physical`] simulates under `P` and weights each path by
//!   the stochastic exponential `E(∫<theta, dW>)(T)`.
//! * [`Estimator::RiskNeutral`] simulates under `P*` step by step, feeding
//!   `dW = dW* + theta dt` back into the kernel sums for `B`.
//!
//! Both read the same Gaussian streams, so runs with equal seeds share
//! their randomness.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::coefficients::Coefficients;
use crate::error::{Error, Result};
use crate::market::{discount, stochastic_exponential, theta, theta_into, ExponentialIncrements};
use crate::rde::EulerStepper;
use crate::simulate::Model;
use crate::viability::CheckMode;

/// Default cap on the fraction of paths dropped for a viability breach.
pub const MAX_BREACH_RATE: f64 = 1e-3;

type PayoffFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// Claim `h(S(T))`. Asset indices are 0-based.
#[derive(Clone)]
pub enum Payoff {
    Call { asset: usize, strike: f64 },
    Put { asset: usize, strike: f64 },
    /// Call on `<weights, S(T)>`.
    Basket { weights: Vec<f64>, strike: f64 },
    /// `S_k(T)` itself.
    Asset { asset: usize },
    /// `h = 1`.
    Bond,
    Custom(Arc<PayoffFn>),
}

impl std::fmt::Debug for Payoff {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Call { asset, strike } => write!(f, "Call {{ asset: {asset}, strike: {strike} }}"),
            Self::Put { asset, strike } => write!(f, "Put {{ asset: {asset}, strike: {strike} }}"),
            Self::Basket { weights, strike } => {
                write!(f, "Basket {{ weights: {weights:?}, strike: {strike} }}")
            }
            Self::Asset { asset } => write!(f, "Asset {{ asset: {asset} }}"),
            Self::Bond => f.write_str("Bond"),
            Self::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl Payoff {
    pub fn custom(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self::Custom(Arc::new(f))
    }

    pub fn eval(&self, s: &[f64]) -> f64 {
        match self {
            Self::Call { asset, strike } => (s[*asset] - strike).max(0.0),
            Self::Put { asset, strike } => (strike - s[*asset]).max(0.0),
            Self::Basket { weights, strike } => {
                (weights.iter().zip(s).map(|(w, x)| w * x).sum::<f64>() - strike).max(0.0)
            }
            Self::Asset { asset } => s[*asset],
            Self::Bond => 1.0,
            Self::Custom(f) => f(s),
        }
    }

    pub fn validate(&self, assets: usize) -> Result<()> {
        let check_asset = |k: usize| {
            if k < assets {
                Ok(())
            } else {
                Err(Error::Domain(format!("asset index {k} out of range for {assets} assets")))
            }
        };
        let check_strike = |k: f64| {
            if k >= 0.0 && k.is_finite() {
                Ok(())
            } else {
                Err(Error::Domain(format!("strike must be finite and nonnegative, got {k}")))
            }
        };
        match self {
            Self::Call { asset, strike } | Self::Put { asset, strike } => {
                check_asset(*asset)?;
                check_strike(*strike)
            }
            Self::Basket { weights, strike } => {
                if weights.len() != assets || weights.iter().any(|w| !w.is_finite()) {
                    return Err(Error::Domain(format!("basket needs {assets} finite weights")));
                }
                check_strike(*strike)
            }
            Self::Asset { asset } => check_asset(*asset),
            Self::Bond | Self::Custom(_) => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Physical,
    RiskNeutral,
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Physical => "physical",
            Self::RiskNeutral => "risk_neutral",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MCConfig {
    pub paths: usize,
    pub seed: u64,
    /// Project the Euler state onto `K(xi)` after every step.
    pub project: bool,
    pub max_breach_rate: f64,
    /// Refuse to price unless the cone-mode boundary check passes.
    pub check_conditions: bool,
}

impl MCConfig {
    pub fn new(paths: usize, seed: u64) -> Self {
        Self {
            paths,
            seed,
            project: true,
            max_breach_rate: MAX_BREACH_RATE,
            check_conditions: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCResult {
    pub estimate: f64,
    pub stderr: f64,
    /// Paths requested; breached paths are excluded from the averages.
    pub paths: usize,
    pub seed: u64,
    pub estimator: Estimator,
    pub breached: usize,
}

impl MCResult {
    /// `(a - b) / sqrt(se_a^2 + se_b^2)`.
    pub fn z_score(&self, other: &MCResult) -> f64 {
        let se = (self.stderr.powi(2) + other.stderr.powi(2)).sqrt();
        let diff = self.estimate - other.estimate;
        if se == 0.0 {
            if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY.copysign(diff)
            }
        } else {
            diff / se
        }
    }
}

/// Terminal prices and change-of-measure weight of one path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathOutcome {
    pub weight: f64,
    pub terminal: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcomes {
    /// Surviving paths in path-index order.
    pub outcomes: Vec<PathOutcome>,
    pub breached: usize,
    pub paths: usize,
    pub seed: u64,
    pub estimator: Estimator,
    /// `e^{-rT}`.
    pub discount: f64,
}

impl Outcomes {
    /// Price of every payoff on the same set of paths.
    pub fn price(&self, payoff: &Payoff) -> MCResult {
        let values: Vec<f64> = self
            .outcomes
            .iter()
            .map(|o| o.weight * self.discount * payoff.eval(&o.terminal))
            .collect();
        let (estimate, stderr) = mean_and_stderr(&values);
        MCResult {
            estimate,
            stderr,
            paths: self.paths,
            seed: self.seed,
            estimator: self.estimator,
            breached: self.breached,
        }
    }

    /// Mean and standard error of a per-path statistic.
    pub fn statistic(&self, f: impl Fn(&PathOutcome) -> f64) -> (f64, f64) {
        let values: Vec<f64> = self.outcomes.iter().map(f).collect();
        mean_and_stderr(&values)
    }
}

/// Pairwise (cascade) summation; the result depends only on the order of
/// `xs`, not on how the work was scheduled.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        xs.iter().sum()
    } else {
        let (a, b) = xs.split_at(xs.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(xs) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Runs the cone-mode boundary check at the representative `xi` levels.
pub fn check_model_conditions(model: &Model) -> Result<()> {
    let scenario = model.scenario();
    let opts = scenario.check_options()?;
    for report in scenario.check_conditions(CheckMode::Cone, &opts)? {
        if !report.passed() {
            return Err(Error::Conditions(report.to_table()));
        }
    }
    Ok(())
}

/// One path under `P`: `W`, `B = K W`, Euler `U`, `V`, `S`, and the weight
/// `E(T)` built from left-point `theta`.
pub fn physical_outcome(model: &Model, seed: u64, path: u64, project: bool) -> Result<PathOutcome> {
    let p = model.physical_path(seed, path, project)?;
    let market = &model.scenario().market;
    let grid = *p.w.grid();
    let floor = 0.5 * p.xi;
    let n = grid.steps();
    let mut inc = ExponentialIncrements {
        martingale: Vec::with_capacity(n),
        bracket: Vec::with_capacity(n),
    };
    for i in 0..n {
        let th = theta(p.v.row(i), market, floor)?;
        let (now, next) = (p.w.row(i), p.w.row(i + 1));
        inc.martingale
            .push(th.iter().zip(now.iter().zip(next)).map(|(t, (a, b))| t * (b - a)).sum());
        inc.bracket.push(th.iter().map(|t| t * t).sum::<f64>() * grid.dt());
    }
    let e = stochastic_exponential(&inc, 1.0, grid)?;
    Ok(PathOutcome {
        weight: e.get(n, 0),
        terminal: p.s.row(n).to_vec(),
    })
}

/// One path under `P*`, built causally: at step `i`, `theta_i` comes from
/// `V(t_i)`, `dW_i = dW*_i + theta_i dt` extends the kernel sum for
/// `B(t_{i+1})`, and log-prices move by `(r - V^2/2) dt + V dW*`.
pub fn riskneutral_outcome(model: &Model, seed: u64, path: u64, project: bool) -> Result<PathOutcome> {
    let scenario = model.scenario();
    let market = &scenario.market;
    let coeffs: &dyn Coefficients = &scenario.coefficients;
    let kernel = model.kernel();
    let grid = scenario.grid;
    let (n, dt) = (grid.steps(), grid.dt());
    let sq = dt.sqrt();
    let d = market.assets();

    let xi = model.draw_xi(seed, path);
    let poly = if project { Some(scenario.polyhedron(xi)?) } else { None };
    let floor = 0.5 * xi;
    let mut streams = model.gaussian_streams(seed, path);

    let mut u = scenario.u0.clone();
    let mut v = vec![0.0; d];
    market.vol_into(&u, &mut v);
    let mut th = vec![0.0; d];
    let mut log_s = vec![0.0; d];
    let mut history: Vec<Vec<f64>> = vec![Vec::with_capacity(n); d];
    let mut b_prev = vec![0.0; d];
    let mut db = vec![0.0; d];
    let mut stepper = EulerStepper::new(coeffs);

    for i in 0..n {
        theta_into(&v, market, floor, &mut th)?;
        let row = kernel.row(i + 1);
        for k in 0..d {
            let z = sq * streams[k].gaussian();
            history[k].push(z + th[k] * dt);
            log_s[k] += (market.rate - 0.5 * v[k] * v[k]) * dt + v[k] * z;
            let b_next: f64 = row.iter().zip(&history[k]).map(|(a, w)| a * w).sum();
            db[k] = b_next - b_prev[k];
            b_prev[k] = b_next;
        }
        stepper.step(coeffs, xi, &mut u, dt, &db);
        if let Some(poly) = &poly {
            u = poly.project(&u)?;
        }
        if u.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { step: i + 1 });
        }
        market.vol_into(&u, &mut v);
    }
    Ok(PathOutcome {
        weight: 1.0,
        terminal: market
            .initial_prices
            .iter()
            .zip(&log_s)
            .map(|(s0, l)| s0 * l.exp())
            .collect(),
    })
}

/// Simulates `cfg.paths` paths in parallel. Breached paths are dropped and
/// counted; more than `cfg.max_breach_rate` of them fails the run.
pub fn simulate_outcomes(model: &Model, cfg: &MCConfig, estimator: Estimator) -> Result<Outcomes> {
    if cfg.paths == 0 {
        return Err(Error::Domain("need at least one path".into()));
    }
    if cfg.check_conditions {
        check_model_conditions(model)?;
    }
    let run = |p: usize| match estimator {
        Estimator::Physical => physical_outcome(model, cfg.seed, p as u64, cfg.project),
        Estimator::RiskNeutral => riskneutral_outcome(model, cfg.seed, p as u64, cfg.project),
    };
    let results: Vec<Result<PathOutcome>> = (0..cfg.paths).into_par_iter().map(run).collect();
    let mut outcomes = Vec::with_capacity(cfg.paths);
    let mut breached = 0;
    for r in results {
        match r {
            Ok(o) => outcomes.push(o),
            Err(Error::ViabilityBreach { .. }) => breached += 1,
            Err(e) => return Err(e),
        }
    }
    if breached as f64 > cfg.max_breach_rate * cfg.paths as f64 {
        return Err(Error::BreachRate {
            breached,
            paths: cfg.paths,
            limit: cfg.max_breach_rate,
        });
    }
    if breached > 0 {
        log::warn!("{breached} of {} paths dropped after a viability breach", cfg.paths);
    }
    Ok(Outcomes {
        outcomes,
        breached,
        paths: cfg.paths,
        seed: cfg.seed,
        estimator,
        discount: discount(model.scenario().grid.horizon(), &model.scenario().market),
    })
}

/// Prices several payoffs on common paths.
pub fn price_many(payoffs: &[Payoff], model: &Model, cfg: &MCConfig, estimator: Estimator) -> Result<Vec<MCResult>> {
    for p in payoffs {
        p.validate(model.scenario().market.assets())?;
    }
    let outcomes = simulate_outcomes(model, cfg, estimator)?;
    Ok(payoffs.iter().map(|p| outcomes.price(p)).collect())
}

pub fn price(payoff: &Payoff, model: &Model, cfg: &MCConfig, estimator: Estimator) -> Result<MCResult> {
    Ok(price_many(std::slice::from_ref(payoff), model, cfg, estimator)?.remove(0))
}

pub fn price_physical_weighted(payoff: &Payoff, model: &Model, cfg: &MCConfig) -> Result<MCResult> {
    price(payoff, model, cfg, Estimator::Physical)
}

pub fn price_riskneutral(payoff: &Payoff, model: &Model, cfg: &MCConfig) -> Result<MCResult> {
    price(payoff, model, cfg, Estimator::RiskNeutral)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionKind {
    Call,
    Put,
}

fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Black-Scholes price of a European call or put.
pub fn bs_reference_price(s0: f64, strike: f64, rate: f64, sigma: f64, t: f64, kind: OptionKind) -> Result<f64> {
    if !(sigma > 0.0 && t > 0.0 && s0 > 0.0 && strike >= 0.0) {
        return Err(Error::Domain(format!(
            "Black-Scholes needs sigma > 0, T > 0, S0 > 0, K >= 0; got sigma = {sigma}, T = {t}, S0 = {s0}, K = {strike}"
        )));
    }
    let df = (-rate * t).exp();
    let call = if strike == 0.0 {
        s0
    } else {
        let st = sigma * t.sqrt();
        let d1 = ((s0 / strike).ln() + (rate + 0.5 * sigma * sigma) * t) / st;
        let d2 = d1 - st;
        s0 * norm_cdf(d1) - strike * df * norm_cdf(d2)
    };
    Ok(match kind {
        OptionKind::Call => call,
        OptionKind::Put => call - s0 + strike * df,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;
    use crate::scenario::Scenario;

    fn model(mut s: Scenario, steps: usize) -> Model {
        s.grid = TimeGrid::new(1.0, steps).unwrap();
        Model::new(s).unwrap()
    }

    #[test]
    fn black_scholes_identities() {
        assert_eq!(bs_reference_price(1.3, 0.0, 0.05, 0.2, 1.0, OptionKind::Call).unwrap(), 1.3);
        for &k in &[0.5, 1.0, 1.7] {
            let c = bs_reference_price(1.2, k, 0.03, 0.25, 2.0, OptionKind::Call).unwrap();
            let p = bs_reference_price(1.2, k, 0.03, 0.25, 2.0, OptionKind::Put).unwrap();
            assert!((c - p - (1.2 - k * (-0.06f64).exp())).abs() < 1e-12);
        }
        let atm = bs_reference_price(1.0, 1.0, 0.0, 0.2, 1.0, OptionKind::Call).unwrap();
        assert!((atm - 0.079_655_674_554_057_96).abs() < 1e-14, "{atm}");
        assert!(bs_reference_price(1.0, 1.0, 0.0, 0.0, 1.0, OptionKind::Call).is_err());
    }

    #[test]
    fn pairwise_summation() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64 * 0.1).collect();
        assert!((pairwise_sum(&xs) - 49_950.0).abs() < 1e-9);
        let (m, se) = mean_and_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn payoffs() {
        let s = [1.5, 0.5];
        assert_eq!(Payoff::Call { asset: 0, strike: 1.0 }.eval(&s), 0.5);
        assert_eq!(Payoff::Put { asset: 1, strike: 1.0 }.eval(&s), 0.5);
        assert_eq!(Payoff::Basket { weights: vec![0.5, 0.5], strike: 0.5 }.eval(&s), 0.5);
        assert_eq!(Payoff::Asset { asset: 1 }.eval(&s), 0.5);
        assert_eq!(Payoff::Bond.eval(&s), 1.0);
        assert_eq!(Payoff::custom(|s| s[0] * s[1]).eval(&s), 0.75);
        assert!(Payoff::Call { asset: 2, strike: 1.0 }.validate(2).is_err());
        assert!(Payoff::Put { asset: 0, strike: -1.0 }.validate(2).is_err());
        assert!(Payoff::Basket { weights: vec![1.0], strike: 1.0 }.validate(2).is_err());
    }

    #[test]
    fn degenerate_bond_and_call() {
        let m = model(Scenario::degenerate(), 16);
        let cfg = MCConfig::new(20_000, 3);
        let df = (-0.05f64).exp();
        for est in [Estimator::Physical, Estimator::RiskNeutral] {
            let r = price_many(
                &[Payoff::Bond, Payoff::Call { asset: 0, strike: 1.0 }],
                &m,
                &cfg,
                est,
            )
            .unwrap();
            assert!((r[0].estimate - df).abs() <= 3.0 * r[0].stderr + 1e-12, "{est} {:?}", r[0]);
            let bs = bs_reference_price(1.0, 1.0, 0.05, 0.5, 1.0, OptionKind::Call).unwrap();
            assert!((r[1].estimate - bs).abs() <= 3.0 * r[1].stderr, "{est} {:?} vs {bs}", r[1]);
            assert_eq!(r[1].breached, 0);
        }
    }

    #[test]
    fn zero_drift_change_gives_identical_paths() {
        let mut s = Scenario::reference_example();
        s.market.drift = vec![s.market.rate; 2];
        let m = model(s, 32);
        for path in 0..10 {
            let a = physical_outcome(&m, 5, path, true).unwrap();
            let b = riskneutral_outcome(&m, 5, path, true).unwrap();
            assert_eq!(a.weight, 1.0);
            assert_eq!(b.weight, 1.0);
            for (x, y) in a.terminal.iter().zip(&b.terminal) {
                assert!((x - y).abs() <= 1e-12 * x.abs(), "{x} {y}");
            }
        }
    }

    #[test]
    fn results_are_deterministic() {
        let m = model(Scenario::reference_example(), 32);
        let cfg = MCConfig::new(500, 9);
        let call = Payoff::Call { asset: 0, strike: 1.0 };
        for est in [Estimator::Physical, Estimator::RiskNeutral] {
            let a = price(&call, &m, &cfg, est).unwrap();
            let b = price(&call, &m, &cfg, est).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.estimate.to_bits(), b.estimate.to_bits());
        }
    }

    #[test]
    fn strike_ladder_is_monotone() {
        let m = model(Scenario::reference_example(), 32);
        let ladder: Vec<Payoff> = [0.6, 0.8, 1.0, 1.2, 1.4]
            .iter()
            .map(|&k| Payoff::Call { asset: 0, strike: k })
            .collect();
        for est in [Estimator::Physical, Estimator::RiskNeutral] {
            let r = price_many(&ladder, &m, &MCConfig::new(2000, 1), est).unwrap();
            for w in r.windows(2) {
                assert!(w[1].estimate <= w[0].estimate);
            }
        }
    }

    #[test]
    fn breaches_are_counted_and_capped() {
        // Without projection the reference dynamics leave K(xi) and drive
        // V below xi / 2 on a sizeable share of paths.
        let m = model(Scenario::reference_example(), 64);
        let mut cfg = MCConfig::new(400, 2);
        cfg.project = false;
        match simulate_outcomes(&m, &cfg, Estimator::RiskNeutral) {
            Err(Error::BreachRate { breached, paths, .. }) => assert!(breached > 0 && paths == 400),
            other => panic!("{other:?}"),
        }
        cfg.max_breach_rate = 1.0;
        let o = simulate_outcomes(&m, &cfg, Estimator::Physical).unwrap();
        assert!(o.breached > 0);
        assert_eq!(o.outcomes.len() + o.breached, 400);
    }

    #[test]
    fn condition_failure_blocks_pricing() {
        let mut s = Scenario::reference_example();
        s.coefficients.constant = vec![-1.0, 0.0];
        let m = model(s, 16);
        assert!(matches!(
            simulate_outcomes(&m, &MCConfig::new(10, 0), Estimator::Physical),
            Err(Error::Conditions(_))
        ));
    }
}
