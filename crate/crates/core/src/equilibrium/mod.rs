//! Market clearing: the excess-volume map, the equilibrium solver and the
//! saturation and uniqueness diagnostics.

mod diagnostics;
mod market;
mod saturation;
mod solver;

pub use diagnostics::{
    check_uniqueness, strictly_feasible_plants, DiagnosticsReport, MonotonicitySample, UniquenessOptions,
};
pub use market::{excess_volume, worker_pool, Evaluation, Market};
pub use saturation::{detect_saturation, saturation_of, DeliverySaturation, DeliveryStatus, SaturationReport};
pub use solver::{
    solve_equilibrium, BoundContacts, EquilibriumOptions, EquilibriumResult, Method, Status, StepKind, TraceEntry,
};
