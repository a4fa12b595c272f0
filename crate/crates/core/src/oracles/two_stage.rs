use serde::{Deserialize, Serialize};

use crate::equilibrium::{EquilibriumResult, Market};
use crate::error::OracleError;
use crate::model::PlayerKind;
use crate::scalar::Scalar;

/// Inputs of the two-stage closed form for one delivery, conditional on
/// the first trading time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStageParams<S> {
    pub expected_t2_price: S,
    /// Risk aversion of every producer and consumer.
    pub lambdas: Vec<S>,
    /// `Cov[Pi(t2), C_p]` per producer, `C_p` the fuel and emission cost.
    pub cost_covariances: Vec<S>,
    /// `Cov[Pi(t2), D]`.
    pub demand_covariance: S,
    /// `sum_c s_c p_c`.
    pub retail: S,
}

/// `(sum_i 1/lambda_i)^-1`.
pub fn harmonic_risk_aversion<S: Scalar>(lambdas: &[S]) -> S {
    let mut inv = S::zero();
    for l in lambdas {
        inv += S::one() / l.clone();
    }
    S::one() / inv
}

/// First-stage price `E[Pi(t2)] + lambda (sum_p Cov[Pi(t2), C_p] - retail Cov[Pi(t2), D])`
/// with `lambda` the harmonic aggregate of all risk aversions.
pub fn two_stage_price<S: Scalar>(params: &TwoStageParams<S>) -> Result<S, OracleError> {
    if params.lambdas.is_empty() || params.lambdas.iter().any(|l| !(l.clone() > S::zero())) {
        return Err(OracleError::Precondition("risk aversions must be positive".into()));
    }
    let mut cost = S::zero();
    for c in &params.cost_covariances {
        cost += c.clone();
    }
    let premium = cost - params.retail.clone() * params.demand_covariance.clone();
    Ok(params.expected_t2_price.clone() + harmonic_risk_aversion(&params.lambdas) * premium)
}

/// Closed form against the general solver on a one-delivery market with
/// two trading times. Prices are discounted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoStageComparison {
    pub params: TwoStageParams<f64>,
    pub formula_price: f64,
    pub solver_price: f64,
    pub relative_gap: f64,
    /// No plant on a capacity or ramp limit and no trading bound touched.
    pub interior: bool,
    /// Largest covariance between the first-time power price and any
    /// procurement price, relative to the largest covariance entry. The
    /// closed form assumes this is zero.
    pub first_time_coupling: f64,
}

pub fn two_stage_from_equilibrium(
    market: &Market<f64>,
    result: &EquilibriumResult<f64>,
) -> Result<TwoStageComparison, OracleError> {
    if market.n_deliveries() != 1 || market.n_slots() != 2 {
        return Err(OracleError::Precondition("two-stage check needs one delivery with two trading times".into()));
    }
    let q = &market.data.covariance.matrix;
    let n = 2;
    let mut params = TwoStageParams {
        expected_t2_price: result.prices[1],
        lambdas: market.players.iter().map(|p| p.risk_aversion).collect(),
        cost_covariances: Vec::new(),
        demand_covariance: 0.0,
        retail: 0.0,
    };
    let mut interior = !result.bound_contacts.any();
    let demand: f64 = market.consumers().iter().map(|c| c.b_eq[0]).sum();
    let discount = market.data.slot_discounts[0];
    for (p, sol) in market.players.iter().zip(&result.player_solutions) {
        match p.kind {
            PlayerKind::Producer => {
                let pd = p.layout.as_ref().map(|l| l.priced_dim()).unwrap_or(n);
                let cov: f64 = (n..pd).map(|k| q[(1, k)] * sol.v[k]).sum();
                params.cost_covariances.push(cov);
                if sol.active_set.iter().any(|&i| p.row_kinds[i].touches_generation()) {
                    interior = false;
                }
            }
            PlayerKind::Consumer if demand != 0.0 => params.retail += p.retail_revenue / (discount * demand),
            PlayerKind::Consumer => {}
        }
    }
    let formula_price = two_stage_price(&params)?;
    let solver_price = result.prices[0];
    let scale = q.amax().max(f64::MIN_POSITIVE);
    let coupling = (n..q.ncols()).map(|k| q[(0, k)].abs()).fold(0.0, f64::max) / scale;
    Ok(TwoStageComparison {
        params,
        formula_price,
        solver_price,
        relative_gap: (formula_price - solver_price).abs() / solver_price.abs().max(1.0),
        interior,
        first_time_coupling: coupling,
    })
}
