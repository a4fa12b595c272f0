//! Discrete price processes on scenario trees: Doob decomposition and
//! drift changes that leave the covariance untouched.

mod doob;
mod ensemble;

pub use doob::{
    doob_decompose, shift_measure, verify_covariance_invariance, CovarianceInvariance, DoobCheck, DoobParts,
};
pub use ensemble::{Filtration, PathEnsemble, PathRecord};
