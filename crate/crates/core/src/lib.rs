//! Risk-averse forward-market equilibrium for electricity deliveries.
//!
//! Producers and retail consumers trade electricity forwards at several
//! trading times before each delivery. Producers also trade fuel and
//! emission forwards and run plants with capacity and ramping limits.
//! Every player maximizes a mean-variance utility; the equilibrium is the
//! vector of expected discounted forward prices at which aggregate
//! positions net to zero.
//!
//! The model layer is generic over [`Scalar`] so assembly and the Doob
//! decomposition can run on exact rationals; solvers are generic over
//! [`Real`]. The `*64` aliases below fix the usual `f64` choice.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod equilibrium;
pub mod error;
pub mod linalg;
pub mod model;
pub mod oracles;
pub mod process;
pub mod qp;
pub mod scalar;

pub use error::{EquilibriumError, ModelError, OracleError, ProcessError, QpError};
pub use scalar::{Real, Scalar};

pub type Scenario64 = model::Scenario<f64>;
pub type PlayerProblem64 = model::PlayerProblem<f64>;
pub type PlayerSolution64 = qp::PlayerSolution<f64>;
pub type Market64 = equilibrium::Market<f64>;
pub type EquilibriumResult64 = equilibrium::EquilibriumResult<f64>;
pub type PathEnsemble64 = process::PathEnsemble<f64>;
pub type ExactPathEnsemble = process::PathEnsemble<num_rational::BigRational>;
