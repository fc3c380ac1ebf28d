//! Building-aware BS association for millimeter-wave cellular downlink.
//!
//! The crate has two halves that check each other:
//!
//! * [`analytic`] evaluates the stochastic-geometry model in closed form or by
//!   adaptive quadrature: average LOS distance, the effective main-lobe radius,
//!   SIR coverage of near-building and far-from-building UEs, mean cell load,
//!   average rate, and the optimal association bias.
//! * [`simulate`] drops Poisson networks over a Boolean field of rectangular
//!   buildings, runs the association protocol from [`association`], and
//!   estimates the same quantities by Monte Carlo.
//!
//! [`scenario`] owns the parameter record shared by both, and [`geometry`]
//! holds the point-process sampling and blockage queries.

pub mod analytic;
pub mod association;
pub mod error;
pub mod geometry;
pub mod optimize;
pub mod quadrature;
pub mod scenario;
pub mod simulate;

pub use error::{Error, Result};
pub use scenario::{CityPreset, ScenarioParams};

/// Square metres per square kilometre; densities are quoted per km².
pub const M2_PER_KM2: f64 = 1.0e6;
