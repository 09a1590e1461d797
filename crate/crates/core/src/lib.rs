//! Numerical engine for the assets–leverage–trust macro-financial model.
//!
//! The model couples total assets `A`, leverage `L = D/A` and trust `T` (the
//! fraction of assets accepted as collateral) through three ODEs in
//! non-dimensional time. This crate simulates them, evaluates the analytic
//! leverage/trust curves, analyses fixed points and basins of attraction,
//! runs piecewise-constant policy scenarios and calibrates a two-state
//! Markov-switching discrete version to return-on-equity data.

// `!(x > 0.0)` is used on purpose: unlike `x <= 0.0` it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod closed_form;
pub mod dynamics;
pub mod io;
pub mod phase_portrait;
pub mod quadrature;
pub mod scenario;
pub mod stability;
pub mod trajectory;

pub use dynamics::{DerivedParams, DomainError, EconState, GrowthRates, Params, RateVector};
pub use trajectory::{IntegratorConfig, Method, Sample, Terminal, TrajectoryRecord};
