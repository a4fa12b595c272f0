//! Market data, canonical variable layout and player problem assembly.

mod assembly;
mod covariance;
mod grid;
mod index;
mod scenario;
mod validate;

pub use assembly::{
    assemble_all, assemble_consumer, assemble_producer, MarketData, PlayerKind, PlayerProblem, RowKind,
};
pub use covariance::{
    covariance_from_blocks, estimate_covariance, regularize, scenario_covariance, stacked_discounts,
    weighted_covariance, Covariance, RIDGE_CAP, RIDGE_FLOOR, SINGULAR_REL,
};
pub use grid::TradingGrid;
pub use index::{canonical_index, ProducerLayout, Var};
pub use scenario::{Bounds, Consumer, CovarianceBlocks, ExogenousModel, Fuel, PowerPlant, Producer, Scenario, SCHEMA};
pub use validate::{validate_scenario, Check, Severity, ValidationOptions, ValidationReport};
