//! Multilevel Picard (MLP) Monte Carlo approximation of solution paths of
//! backward stochastic differential equations
//!
//! ```text
//! Y_t = g(W_T) + ∫_t^T f(s, W_s, Y_s) ds - ∫_t^T Z_s dW_s
//! ```
//!
//! The crate provides the recursive MLP estimator with exact cost
//! accounting ([`mlp`]), the multi-grid path estimator built from it
//! ([`pathgrid`]), analytic cost and error bounds ([`cost`]), independent
//! reference solutions ([`oracle`]), and the experiment harness behind the
//! `mlpbsde` command-line tool ([`experiments`], [`validate`]).

pub mod config;
pub mod cost;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod mlp;
pub mod oracle;
pub mod pathgrid;
pub mod problem;
pub mod quadrature;
pub mod randomness;
pub mod validate;

pub use error::{Error, Result};
pub use exec::Exec;
pub use mlp::{mlp_evaluate, mlp_field, CostCounters, MlpConfig, MlpField};
pub use oracle::{affine_closed_form, picard_quadrature, ReferenceSolution};
pub use pathgrid::{path_estimate, path_value, PathEstimate};

pub use problem::{builtin_problem, BsdeProblem, Family, ProblemParams};
pub use randomness::{MasterSeed, ThetaPath};

pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));
