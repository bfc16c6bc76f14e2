//! Fixed-confidence active multi-hypothesis testing.
//!
//! A learner repeatedly picks a sensing action, observes a Gaussian sample
//! whose mean depends on the unknown true hypothesis, and must stop and name
//! that hypothesis with error probability at most `delta`. This crate provides
//! Track-and-Stop with champion-specific hypothesis elimination alongside
//! Greedy, plain Track-and-Stop and stopping-only elimination baselines, the
//! max-min oracle allocation solver they track, and a seeded Monte Carlo
//! harness for sweeping experiment grids.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`, which the harness and CLI use.

pub mod cli;
pub mod engine;
pub mod harness;
pub mod model;
pub mod oracle;
pub mod scalar;
pub mod simplex;

pub use engine::{run_trial, thresholds, PolicyKind, TrialState};
pub use model::{HypSet, ModelError};
pub use oracle::{grid_oracle, oracle_allocation, worst_case_rate, OracleError};
pub use scalar::Scalar;

pub type Environment = model::Environment<f64>;
pub type KlTable = model::KlTable<f64>;
pub type Allocation = oracle::Allocation<f64>;
pub type OracleSolution = oracle::OracleSolution<f64>;
pub type PolicyConfig = engine::PolicyConfig<f64>;
pub type TrialResult = engine::TrialResult<f64>;
pub type DiagnosticsTrace = engine::DiagnosticsTrace<f64>;

pub type Environment32 = model::Environment<f32>;
pub type PolicyConfig32 = engine::PolicyConfig<f32>;
