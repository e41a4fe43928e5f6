//! Volatility, prices, the market price of risk and the stochastic
//! exponential.
//!
//! Volatility is `V_k(t) = <h_k, U(t)>` and risky prices follow the exact
//! exponential `S_k(t) = S_k(0) exp(∫(b_k - V_k^2/2) ds + ∫V_k dW_k)`,
//! discretized with left-point sums.

use serde::{Deserialize, Serialize};

use crate::coefficients::dot;
use crate::error::{Error, Result};
use crate::grid::{SamplePath, TimeGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketParams {
    pub rate: f64,
    /// Drifts `b_k` of the risky assets.
    pub drift: Vec<f64>,
    pub initial_prices: Vec<f64>,
    /// Initial risk-free price.
    pub riskfree_initial: f64,
    /// Projection vectors `h_k`.
    pub projections: Vec<Vec<f64>>,
    /// Anchor indices `i_k` with `h_k[i_k] != 0` (0-based).
    pub anchors: Vec<usize>,
}

impl MarketParams {
    /// `h_1 = (1, 1)`, `h_2 = (1, 0)`, both anchored on the first
    /// coordinate; `b = (1, 1)`, `S(0) = (1, 1)`.
    pub fn reference_example(rate: f64) -> Self {
        Self {
            rate,
            drift: vec![1.0, 1.0],
            initial_prices: vec![1.0, 1.0],
            riskfree_initial: 1.0,
            projections: vec![vec![1.0, 1.0], vec![1.0, 0.0]],
            anchors: vec![0, 0],
        }
    }

    pub fn assets(&self) -> usize {
        self.drift.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.assets();
        if d == 0 {
            return Err(Error::Dimension("market needs at least one asset".into()));
        }
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(Error::Domain(format!("rate must be positive, got {}", self.rate)));
        }
        if self.drift.iter().any(|b| !b.is_finite()) {
            return Err(Error::Domain("drifts must be finite".into()));
        }
        if self.initial_prices.len() != d || self.projections.len() != d || self.anchors.len() != d {
            return Err(Error::Dimension(format!(
                "drift, initial_prices, projections and anchors must all have {d} entries"
            )));
        }
        if self.initial_prices.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Domain("initial prices must be positive".into()));
        }
        if !(self.riskfree_initial > 0.0 && self.riskfree_initial.is_finite()) {
            return Err(Error::Domain("initial risk-free price must be positive".into()));
        }
        let dim = self.projections[0].len();
        for (k, (h, &i)) in self.projections.iter().zip(&self.anchors).enumerate() {
            if h.len() != dim {
                return Err(Error::Dimension(format!("projection h[{k}] has {} entries, expected {dim}", h.len())));
            }
            if h.iter().all(|&v| v == 0.0) || h.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!("projection h[{k}] must be finite and nonzero")));
            }
            match h.get(i) {
                Some(&v) if v != 0.0 => {}
                _ => {
                    return Err(Error::Domain(format!(
                        "anchor index {i} must point at a nonzero entry of h[{k}]"
                    )))
                }
            }
        }
        Ok(())
    }

    /// `V_k = <h_k, u>` for a single state.
    pub fn vol_into(&self, u: &[f64], out: &mut [f64]) {
        for (o, h) in out.iter_mut().zip(&self.projections) {
            *o = dot(h, u);
        }
    }
}

pub fn vol_from_state(u: &SamplePath, params: &MarketParams) -> Result<SamplePath> {
    let dim = params.projections.first().map_or(0, Vec::len);
    if u.dims() != dim {
        return Err(Error::Dimension(format!(
            "state has {} components, projections expect {dim}",
            u.dims()
        )));
    }
    let d = params.assets();
    let mut out = SamplePath::zeros(*u.grid(), d);
    for i in 0..u.grid().len() {
        params.vol_into(u.row(i), out.row_mut(i));
    }
    Ok(out)
}

/// `S^0(t) = S^0(0) e^{rt}`.
pub fn riskfree_price(t: f64, params: &MarketParams) -> f64 {
    params.riskfree_initial * (params.rate * t).exp()
}

pub fn discount(t: f64, params: &MarketParams) -> f64 {
    (-params.rate * t).exp()
}

pub fn simulate_prices(v: &SamplePath, w: &SamplePath, params: &MarketParams) -> Result<SamplePath> {
    let d = params.assets();
    if v.grid() != w.grid() {
        return Err(Error::GridMismatch("volatility and Brownian grids differ".into()));
    }
    if v.dims() != d || w.dims() != d {
        return Err(Error::Dimension(format!(
            "volatility has {} and Brownian motion {} components, market has {d} assets",
            v.dims(),
            w.dims()
        )));
    }
    let grid = *v.grid();
    let dt = grid.dt();
    let mut out = SamplePath::zeros(grid, d);
    let mut log = vec![0.0; d];
    out.row_mut(0).copy_from_slice(&params.initial_prices);
    for i in 0..grid.steps() {
        for k in 0..d {
            let vol = v.get(i, k);
            let dw = w.get(i + 1, k) - w.get(i, k);
            log[k] += (params.drift[k] - 0.5 * vol * vol) * dt + vol * dw;
            out.set(i + 1, k, params.initial_prices[k] * log[k].exp());
        }
    }
    Ok(out)
}

/// `theta_k = (r - b_k) / V_k`; any `V_k <= floor` is a viability breach.
pub fn theta(v: &[f64], params: &MarketParams, floor: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; v.len()];
    theta_into(v, params, floor, &mut out)?;
    Ok(out)
}

pub fn theta_into(v: &[f64], params: &MarketParams, floor: f64, out: &mut [f64]) -> Result<()> {
    for (k, (o, &vol)) in out.iter_mut().zip(v).enumerate() {
        if !(vol > floor) {
            return Err(Error::ViabilityBreach {
                component: k,
                value: vol,
                floor,
            });
        }
        *o = (params.rate - params.drift[k]) / vol;
    }
    Ok(())
}

/// Per-step data of a stochastic integral `M = ∫<theta, dW>`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExponentialIncrements {
    /// `<theta_j, dW_j>`.
    pub martingale: Vec<f64>,
    /// `|theta_j|^2 dt`.
    pub bracket: Vec<f64>,
}

/// `E^q(t_i) = exp(-(q^2 / 2) <M>_{t_i} + q M(t_i))` as a scalar path.
pub fn stochastic_exponential(inc: &ExponentialIncrements, q: f64, grid: TimeGrid) -> Result<SamplePath> {
    if inc.martingale.len() != grid.steps() || inc.bracket.len() != grid.steps() {
        return Err(Error::GridMismatch(format!(
            "{} and {} increments for {} steps",
            inc.martingale.len(),
            inc.bracket.len(),
            grid.steps()
        )));
    }
    let mut out = SamplePath::zeros(grid, 1);
    out.set(0, 0, 1.0);
    let mut log = 0.0;
    for (i, (m, b)) in inc.martingale.iter().zip(&inc.bracket).enumerate() {
        log += q * m - 0.5 * q * q * b;
        out.set(i + 1, 0, log.exp());
    }
    Ok(out)
}
