//! Player best responses: a convex QP solver, KKT residuals and the
//! derivative of the response with respect to prices.

pub mod active_set;
mod player;

pub use active_set::{phase_one, solve_active_set, ActiveSetOptions, Qp, QpSolution};
pub use player::{
    best_response_volumes, consumer_projection_jacobian, kkt_residual, response_jacobian, solve_qp, PlayerSolution,
    QpOptions, ResidualReport, ResponseJacobian, WarmStart,
};
