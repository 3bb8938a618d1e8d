//! Deterministic simulator for Byzantine-robust federated learning.
//!
//! Honest clients run `K^t` local SGD steps with per-client rates, Byzantine
//! clients upload arbitrary vectors, and the server aggregates with the
//! geometric median. The [`theory`] module computes the linear-rate
//! optimality-gap envelopes that runs are checked against.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregation;
pub mod clients;
pub mod config;
pub mod error;
pub mod linalg;
pub mod problems;
pub mod rng;
pub mod server;
pub mod theory;
pub mod vector;
pub mod verify;

pub use aggregation::{
    ball_robustness_check, geomed_objective, geometric_median, AggregateResult, Aggregator,
    RobustnessCert, WeiszfeldConfig,
};
pub use clients::{AttackKind, ClientSpec, Schedule};
pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use problems::{make_synthetic, GradOracleMode, LossKind, Problem, SmoothnessConstants};
pub use rng::RngContract;
pub use server::{run_experiment, Experiment, TraceRecord};
pub use theory::TheoryParams;
pub use vector::ParamVector;
