//! Training and curvature analysis for a small Bayesian physics-informed
//! network fit to the Van der Pol oscillator.
//!
//! The crate is organized around a scalar autodiff engine ([`diffengine`])
//! that supplies exact gradients and Hessian-vector products, a variational
//! MLP surrogate ([`model`]), the Van der Pol problem definition and its
//! reference solution ([`physics`]), a Bayes-by-Backprop training loop
//! ([`training`]), a matrix-free symmetric-operator toolkit ([`curvature`]),
//! and the constraint-hierarchy diagnostics built on top of it ([`metrics`]).
//!
//! The negative log-posterior decomposes as a weighted sum of data, ODE
//! residual, initial-condition, endpoint-anchor, and prior terms; the Hessian
//! of each term is queried matrix-free at the frozen variational mean and
//! summarized by four per-constraint diagnostics (SC, AS, VA, CNR) plus an
//! aggregated rank.

pub mod constraints;
pub mod curvature;
pub mod diffengine;
mod linalg;
pub mod metrics;
pub mod model;
pub mod physics;
pub mod seeds;
pub mod training;
