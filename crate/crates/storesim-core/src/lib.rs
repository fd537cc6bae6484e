//! Core library for sizing and operating a single-bus power system in which
//! lossy storage firms up fluctuating net renewable generation.
//!
//! - [`model`]: slot-based system dynamics, feasibility, and the disturbance
//!   abstraction.
//! - [`policies`]: closed-form storage control rules and rate-cap composition.
//! - [`analytics`]: Laplace-disturbance closed forms for stationary costs and
//!   distributions, capacity inversion, and asymptotic loss rates.
//! - [`dp`]: average-cost dynamic programming on a grid, threshold recovery,
//!   and the two-slot threshold construction.
//! - [`sim`]: Monte Carlo and trace-driven evaluation, sweeps, Pareto
//!   frontiers, and capacity planning.
//! - [`data`]: time-series ingestion, linear prediction, residual modelling,
//!   and distribution fitting.

pub mod analytics;
pub mod data;
pub mod dp;
pub mod model;
mod numeric;
pub mod policies;
pub mod sim;
