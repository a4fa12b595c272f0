use serde::Serialize;

use crate::error::OracleError;
use crate::model::Scenario;

/// Shape of the clearing set of one delivery when players only maximize
/// expected profit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeanMaxKind {
    /// One clearing price; demand falls inside a supply jump, so the
    /// marginal plants' output is not pinned down by the price alone.
    UniquePrice,
    /// Demand sits exactly on a flat stretch of supply: every price in
    /// `[price_low, price_high]` clears.
    PriceInterval,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanMaxDelivery {
    pub delivery: usize,
    pub demand: f64,
    pub kind: MeanMaxKind,
    /// Lowest clearing price, undiscounted.
    pub price: f64,
    pub price_low: f64,
    pub price_high: f64,
    /// Supply offered at `price`: plants strictly in the money at the low
    /// end, plus the marginal plants at the high end.
    pub volume_low: f64,
    pub volume_high: f64,
    pub marginal_plants: Vec<String>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanMaxResult {
    pub deliveries: Vec<MeanMaxDelivery>,
    /// Undiscounted expected price per slot in canonical order.
    pub prices: Vec<f64>,
    /// Largest price difference between trading times of one delivery.
    pub spread: f64,
}

struct Unit {
    name: String,
    capacity: f64,
    cost: f64,
}

const MAX_BISECTIONS: usize = 200;

/// Smallest `p` in `[lo, hi]` with `pred(p)`, for monotone `pred`.
fn bisect(lo: f64, hi: f64, pred: impl Fn(f64) -> bool) -> Result<(f64, usize), OracleError> {
    if !pred(hi) {
        return Err(OracleError::Precondition(format!("no clearing price in [{lo}, {hi}]")));
    }
    if pred(lo) {
        return Ok((lo, 0));
    }
    let (mut a, mut b) = (lo, hi);
    for it in 1..=MAX_BISECTIONS {
        let m = 0.5 * (a + b);
        if pred(m) {
            b = m;
        } else {
            a = m;
        }
        if b - a <= 1e-13 * b.abs().max(a.abs()).max(1.0) {
            return Ok((b, it));
        }
    }
    Err(OracleError::NoConvergence(format!("price bisection stalled in [{a}, {b}]")))
}

fn snap(p: f64, breaks: &[f64]) -> f64 {
    let tol = 1e-9 * p.abs().max(1.0);
    breaks.iter().copied().find(|b| (b - p).abs() <= tol).unwrap_or(p)
}

/// Equilibrium of the linear variant of the market, in which players
/// maximize expected profit only. Prices within a delivery are equal, so
/// each delivery reduces to a merit-order step supply against fixed
/// demand, solved by bisection.
///
/// Requires fuel and emission forwards that are flat across the trading
/// times of each delivery (otherwise the linear problem trades the
/// differences up to the position limits) and, with several deliveries,
/// ramp limits that never bind.
pub fn mean_max_equilibrium(scenario: &Scenario<f64>) -> Result<MeanMaxResult, OracleError> {
    scenario.check_shapes().map_err(|e| OracleError::Precondition(e.to_string()))?;
    let grid = &scenario.grid;
    let nl = scenario.n_fuels();
    let ex = &scenario.exogenous;
    let pi_max = scenario.bounds.pi_max;
    let nj = grid.n_deliveries();
    if nj > 1 {
        for p in &scenario.producers {
            for r in &p.plants {
                if r.ramp_up < r.capacity || -r.ramp_down < r.capacity {
                    return Err(OracleError::Precondition(format!(
                        "plant {} has binding ramp limits; deliveries do not decouple",
                        r.name
                    )));
                }
            }
        }
    }
    let mut prices = vec![0.0; grid.n_slots()];
    let mut deliveries = Vec::with_capacity(nj);
    for j in 0..nj {
        let slots = grid.slots(j);
        let first = slots.start;
        for s in slots.clone() {
            let flat = (0..nl).all(|l| ex.fuel_forwards[s * nl + l] == ex.fuel_forwards[first * nl + l])
                && ex.emission_forwards[s] == ex.emission_forwards[first];
            if !flat {
                return Err(OracleError::Precondition(format!(
                    "fuel or emission forwards vary across the trading times of delivery {j}"
                )));
            }
        }
        let mut units = Vec::new();
        for p in &scenario.producers {
            for r in &p.plants {
                let l = scenario
                    .fuel_index(&r.fuel)
                    .ok_or_else(|| OracleError::Precondition(format!("unknown fuel {}", r.fuel)))?;
                let cost = r.efficiency * ex.fuel_forwards[first * nl + l]
                    + scenario.fuels[l].emission_intensity * ex.emission_forwards[first];
                units.push(Unit { name: r.name.clone(), capacity: r.capacity, cost });
            }
        }
        let demand = ex.demand[j];
        let below = |p: f64| units.iter().filter(|u| u.cost < p).fold(0.0, |a, u| a + u.capacity);
        let upto = |p: f64| units.iter().filter(|u| u.cost <= p).fold(0.0, |a, u| a + u.capacity);
        let mut breaks: Vec<f64> = units.iter().map(|u| u.cost).collect();
        breaks.extend([-pi_max, pi_max]);

        // Clearing set: {p : below(p) <= demand <= upto(p)}.
        let (low, it_low) = bisect(-pi_max, pi_max, |p| upto(p) >= demand)?;
        let (above, it_high) = bisect(-pi_max, pi_max, |p| below(p) > demand).unwrap_or((pi_max, 0));
        let low = snap(low, &breaks);
        let high = snap(above, &breaks).max(low);
        if below(low) > demand {
            return Err(OracleError::Precondition(format!("delivery {j}: no clearing price")));
        }
        let kind = if high > low { MeanMaxKind::PriceInterval } else { MeanMaxKind::UniquePrice };
        let marginal = units.iter().filter(|u| u.cost == low).map(|u| u.name.clone()).collect();
        for s in slots {
            prices[s] = low;
        }
        deliveries.push(MeanMaxDelivery {
            delivery: j,
            demand,
            kind,
            price: low,
            price_low: low,
            price_high: high,
            volume_low: below(low),
            volume_high: upto(low),
            marginal_plants: marginal,
            iterations: it_low + it_high,
        });
    }
    let spread = (0..nj)
        .map(|j| {
            let v: Vec<f64> = grid.slots(j).map(|s| prices[s]).collect();
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            hi - lo
        })
        .fold(0.0, f64::max);
    Ok(MeanMaxResult { deliveries, prices, spread })
}
