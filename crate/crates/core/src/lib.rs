//! Autoregressive transport models for time series of one-dimensional
//! distributions: transport-map algebra on a shared grid, distribution
//! utilities in the quantile representation, model fitting and forecasting,
//! and simulation drivers.

// negated comparisons in validation code are intentional: `!(a > b)` also
// rejects NaN, which `a <= b` would let through
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod distribution;
pub mod error;
pub mod grid;
pub mod io;
pub mod model;
pub mod sim;
pub mod transport;

pub use distribution::{frechet_mean, lqd_inverse, wasserstein_distance, Distribution, SampleBatch};
pub use error::{AtmError, Result};
pub use grid::{enforce_monotone, Grid, MonotoneFn, NaturalCubicSpline, ProbGrid};
pub use model::{
    build_transport_series, evaluate_rolling, fit_atm1, fit_atmp, fit_cat, forecast_distribution,
    predict_transport, select_order, Atm1Fit, AtmPFit, AtmVariant, CatFit, FitConfig, Sign,
};
pub use sim::{
    atm_step, gaussian_shrinking_series, run_monte_carlo, simulate_atm, simulate_sin_series,
    transports_as_distributions, McSummary, NoiseFormula, SimConfig, SinExperiment, SinSimConfig,
    SplineNoiseModel, TransportExperiment,
};
pub use transport::{ominus, pushforward, OdotGrad, TransportMap};
