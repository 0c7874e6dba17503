//! Bachelier and Black-Scholes option pricing side by side.
//!
//! - [`models`]: parameter types and Gaussian primitives
//! - [`pricing`]: closed-form prices, parity, at-the-money comparisons
//! - [`implied`]: implied volatilities in both models
//! - [`series`]: the moneyness power series and its rules of thumb
//! - [`chaos`]: Wiener-chaos extensions of the Bachelier model
//! - [`smile`]: quote CSV ingestion and implied-volatility tables
//!
//! Monte Carlo and batch routines run on rayon when the `parallel` feature is
//! enabled (the default); results are identical either way.

pub mod chaos;
pub mod error;
pub mod exec;
pub mod implied;
pub mod models;
pub mod pricing;
pub mod series;
pub mod smile;

pub use error::{Error, Result};
pub use exec::Execution;
pub use models::{BachelierParams, BlackScholesParams, ModelParams, MoneynessFrame, OptionKind, OptionSpec};
pub use pricing::{Model, PriceResult};
