//! Simulation and pricing engine for a stochastic volatility market whose
//! volatility is a linear image of an fBm-driven equation kept inside a
//! convex polyhedron.
//!
//! The pieces, bottom-up:
//!
//! * [`fbm`]: exact (Cholesky) and circulant-embedding fBm samplers,
//!   covariance and grid p-variation.
//! * [`volterra`]: the kernel `K_H`, its discretization and the transform
//!   building `B` from a Brownian path `W`.
//! * [`coefficients`]: affine drift/diffusion fields parameterized by the
//!   random level `xi`, and the law of `xi`.
//! * [`viability`]: polyhedra, normal cones, boundary condition checks and
//!   path margins.
//! * [`rde`]: explicit Euler solver for the volatility equation (H > 1/2).
//! * [`market`]: volatility, prices, market price of risk, stochastic
//!   exponential.
//! * [`pricing`]: two Monte Carlo estimators of European prices at t = 0.

pub mod error;
pub mod grid;
pub mod rng;
pub mod special;
pub mod fbm;
pub mod volterra;
pub mod coefficients;
pub mod viability;
pub mod rde;
pub mod market;
pub mod scenario;
pub mod simulate;
pub mod pricing;

pub use coefficients::{AffineCoefficients, Coefficients, XiDistribution, XiLaw};
pub use error::{Error, Result};
pub use fbm::{FbmConfig, FbmSampler, Hurst};
pub use grid::{SamplePath, TimeGrid};
pub use rng::RandomSource;
pub use viability::{BoundingBox, CheckMode, ConditionReport, HalfSpace, Polyhedron};
pub use market::MarketParams;
pub use pricing::{Estimator, MCConfig, MCResult, Payoff};
pub use scenario::Scenario;
pub use simulate::Model;
