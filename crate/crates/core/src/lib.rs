//! Simulation and analytics for hybrid Atlas equity-market models.
//!
//! Stocks carry both name-based and rank-based drift and volatility. The
//! crate validates model constants, computes the product-form stationary law
//! of the rank gaps and the long-run occupation times, simulates the
//! stochastic system, derives capital-distribution-curve diagnostics and
//! evaluates the standard portfolio constructions on simulated paths.
//!
//! Numerical code is generic over the scalar type ([`Real`] for `f32`/`f64`,
//! [`Field`] where exact rational arithmetic also applies); the aliases below
//! fix the common `f64` instantiation.

pub mod capcurve;
pub mod error;
pub mod export;
pub mod invariant;
pub mod linalg;
pub mod model;
pub mod portfolio;
pub mod ranks;
pub mod scalar;
pub mod sde;
pub mod stats;

pub use error::{Error, Result, SkewHypothesis};
pub use model::{validate, DefinitenessMode, ModelParams, SkewCheck, ValidationReport};
pub use ranks::{enumerate_permutations, gaps, rank_permutation, ranked_values, Permutation};
pub use scalar::{Field, Real};

pub use num_rational::BigRational;

pub type Params = ModelParams<f64>;
pub type Params32 = ModelParams<f32>;
pub type RationalParams = ModelParams<BigRational>;
pub type Measure = invariant::InvariantMeasure<f64>;
pub type Occupation = invariant::OccupationMatrix<f64>;
pub type SimResult = sde::SimOutput<f64>;
pub type SimSettings = sde::SimConfig<f64>;
pub type Weights = portfolio::PortfolioWeights<f64>;
pub type Wealth = portfolio::WealthTrack<f64>;
