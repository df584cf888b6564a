//! Budget-constrained adaptive sampling of hourly time series.
//!
//! A learned predictor forecasts the coming hours, a recurrent Q-network
//! decides when to take the next of a fixed number of observations, and an
//! estimator reconstructs the full horizon from the observations and the
//! bridging forecasts. Uniform sampling, AR(4)+Kalman forecasting and GP
//! regression serve as baselines.

pub mod controller;
pub mod data;
pub mod error;
pub mod estimator;
pub mod exec;
pub mod experiment;
pub mod metrics;
pub mod neural;
pub mod predictor;
pub mod sim;
pub mod synth;

pub use error::{Error, Result};
pub use exec::{derive_seed, Execution};
