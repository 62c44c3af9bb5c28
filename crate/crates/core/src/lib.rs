//! Poisson-type multivariate transfer function models.
//!
//! The log of the expected daily count is modelled as an intercept, an
//! optional ARMA disturbance and a sum of rational distributed-lag filters
//! of the input series:
//!
//! ```text
//! ln E(Y_t) = N_t + Σ_i δ_i(B)⁻¹ ω_i(B) X_{i, t−b_i}
//! ```
//!
//! The crate covers the whole workflow: lag-polynomial algebra
//! ([`series`]), ARMA prewhitening models ([`arma`]), Box-Jenkins structure
//! identification ([`identification`]), joint Poisson maximum likelihood
//! ([`model`]), relative risks ([`risk`]) and a forward simulator used as
//! ground truth ([`synth`]).

pub mod arma;
pub mod csv_io;
pub mod error;
pub mod identification;
pub mod model;
pub mod optim;
pub mod risk;
pub mod series;
pub mod synth;

pub use error::{Error, Result};
pub use series::{apply_rational_lag, backshift, difference, steady_state_gain, Dataset, LagPolynomial, Origin, RationalLag, TimeSeries};
