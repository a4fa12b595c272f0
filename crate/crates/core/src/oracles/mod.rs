//! Independent references for the equilibrium solver: the two-stage closed
//! form, the expected-profit (linear) market and a grid search.

mod brute_force;
mod mean_max;
mod two_stage;

pub use brute_force::{brute_force_equilibrium, BruteForceResult, GridSpec, LatticeSelection, MAX_PRICES};
pub use mean_max::{mean_max_equilibrium, MeanMaxDelivery, MeanMaxKind, MeanMaxResult};
pub use two_stage::{
    harmonic_risk_aversion, two_stage_from_equilibrium, two_stage_price, TwoStageComparison, TwoStageParams,
};
