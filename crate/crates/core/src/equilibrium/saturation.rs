use serde::{Deserialize, Serialize};

use super::market::{Evaluation, Market};
use crate::error::EquilibriumError;
use crate::model::{PlayerKind, RowKind};
use crate::qp::QpOptions;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeliveryStatus {
    Interior,
    /// Every plant runs at capacity.
    AllUpper,
    /// Every plant is idle.
    AllLower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliverySaturation {
    pub delivery: usize,
    pub status: DeliveryStatus,
    /// Sum of `Z̃` over the delivery's trading times.
    pub clearing_sum: f64,
    pub n_plants: usize,
    pub plants_at_upper: usize,
    pub plants_at_lower: usize,
    /// All-upper comes with a negative clearing sum, all-lower with a
    /// positive one; interior deliveries are always consistent.
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationReport {
    pub deliveries: Vec<DeliverySaturation>,
}

impl SaturationReport {
    pub fn any_saturated(&self) -> bool {
        self.deliveries.iter().any(|d| d.status != DeliveryStatus::Interior)
    }

    pub fn consistent(&self) -> bool {
        self.deliveries.iter().all(|d| d.consistent)
    }
}

/// Classifies each delivery from the tight capacity rows of the producers'
/// best responses in `eval`.
pub fn saturation_of<T: Real>(market: &Market<T>, eval: &Evaluation<T>) -> SaturationReport {
    let nj = market.n_deliveries();
    let mut upper = vec![0usize; nj];
    let mut lower = vec![0usize; nj];
    let mut plants = 0;
    for (p, s) in market.players.iter().zip(&eval.solutions) {
        if p.kind != PlayerKind::Producer {
            continue;
        }
        plants += p.layout.as_ref().map_or(0, |l| l.n_plants());
        for &i in &s.active_set {
            match p.row_kinds[i] {
                RowKind::CapacityUpper { j, .. } => upper[j] += 1,
                RowKind::CapacityLower { j, .. } => lower[j] += 1,
                _ => {}
            }
        }
    }
    let deliveries = (0..nj)
        .map(|j| {
            let sum: f64 = market.grid.slots(j).map(|s| eval.excess[s].approx_f64()).sum();
            let status = if plants == 0 {
                DeliveryStatus::Interior
            } else if upper[j] == plants {
                DeliveryStatus::AllUpper
            } else if lower[j] == plants {
                DeliveryStatus::AllLower
            } else {
                DeliveryStatus::Interior
            };
            let consistent = match status {
                DeliveryStatus::Interior => true,
                DeliveryStatus::AllUpper => sum < 0.0,
                DeliveryStatus::AllLower => sum > 0.0,
            };
            DeliverySaturation {
                delivery: j,
                status,
                clearing_sum: sum,
                n_plants: plants,
                plants_at_upper: upper[j],
                plants_at_lower: lower[j],
                consistent,
            }
        })
        .collect();
    SaturationReport { deliveries }
}

/// Evaluates best responses at `prices` and classifies each delivery.
pub fn detect_saturation<T: Real>(
    market: &Market<T>,
    prices: &[T],
    opts: &QpOptions,
) -> Result<SaturationReport, EquilibriumError> {
    let eval = market.evaluate(prices, None, opts, None)?;
    Ok(saturation_of(market, &eval))
}
