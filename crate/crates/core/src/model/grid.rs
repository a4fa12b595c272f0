use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Delivery times `T_j`, their trading times `I_j` and the continuously
/// compounded interest rate used for discounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradingGrid {
    pub deliveries: Vec<f64>,
    pub trading_times: Vec<Vec<f64>>,
    #[serde(default)]
    pub interest_rate: f64,
}

impl TradingGrid {
    pub fn new(deliveries: Vec<f64>, trading_times: Vec<Vec<f64>>, interest_rate: f64) -> Self {
        Self { deliveries, trading_times, interest_rate }
    }

    /// Single-delivery grid with the given trading times.
    pub fn single(trading_times: Vec<f64>) -> Self {
        let t = *trading_times.last().expect("at least one trading time");
        Self::new(vec![t], vec![trading_times], 0.0)
    }

    pub fn check(&self) -> Result<(), ModelError> {
        if self.deliveries.is_empty() {
            return Err(ModelError::Grid("no delivery times".into()));
        }
        if self.deliveries.len() != self.trading_times.len() {
            return Err(ModelError::Grid(format!(
                "{} deliveries but {} trading-time lists",
                self.deliveries.len(),
                self.trading_times.len()
            )));
        }
        if !self.interest_rate.is_finite() {
            return Err(ModelError::Grid("interest rate must be finite".into()));
        }
        for w in self.deliveries.windows(2) {
            if !(w[0] < w[1]) {
                return Err(ModelError::Grid("delivery times must be strictly increasing".into()));
            }
        }
        for (j, (t, times)) in self.deliveries.iter().zip(&self.trading_times).enumerate() {
            if times.is_empty() {
                return Err(ModelError::Grid(format!("delivery {j} has no trading times")));
            }
            if times.iter().any(|x| !x.is_finite()) {
                return Err(ModelError::Grid(format!("delivery {j} has a non-finite trading time")));
            }
            for w in times.windows(2) {
                if !(w[0] < w[1]) {
                    return Err(ModelError::Grid(format!("trading times of delivery {j} must be strictly increasing")));
                }
            }
            if times.last() != Some(t) {
                return Err(ModelError::Grid(format!(
                    "last trading time of delivery {j} must equal its delivery time {t}"
                )));
            }
        }
        Ok(())
    }

    pub fn n_deliveries(&self) -> usize {
        self.deliveries.len()
    }

    /// Total number of trading slots `N = sum_j |I_j|`.
    pub fn n_slots(&self) -> usize {
        self.trading_times.iter().map(Vec::len).sum()
    }

    /// Offset of delivery `j` in the canonical slot order.
    pub fn offset(&self, j: usize) -> usize {
        self.trading_times[..j].iter().map(Vec::len).sum()
    }

    pub fn slots(&self, j: usize) -> std::ops::Range<usize> {
        let o = self.offset(j);
        o..o + self.trading_times[j].len()
    }

    /// `(delivery, trading index)` of every slot in canonical order.
    pub fn slot_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.n_slots());
        for (j, times) in self.trading_times.iter().enumerate() {
            for i in 0..times.len() {
                out.push((j, i));
            }
        }
        out
    }

    pub fn delivery_of_slot(&self) -> Vec<usize> {
        self.slot_pairs().into_iter().map(|(j, _)| j).collect()
    }

    /// `exp(-r T_j)`.
    pub fn discount(&self, j: usize) -> f64 {
        (-self.interest_rate * self.deliveries[j]).exp()
    }

    /// Discount factor of every slot in canonical order.
    pub fn slot_discounts(&self) -> Vec<f64> {
        self.slot_pairs().into_iter().map(|(j, _)| self.discount(j)).collect()
    }

    /// Sorted union of all trading times; the steps of the information tree.
    pub fn time_steps(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self.trading_times.iter().flatten().copied().collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        all.dedup();
        all
    }

    /// Position of each slot's trading time within [`Self::time_steps`].
    pub fn slot_steps(&self) -> Vec<usize> {
        let steps = self.time_steps();
        self.trading_times.iter().flatten().map(|t| steps.iter().position(|s| s == t).unwrap()).collect()
    }
}
