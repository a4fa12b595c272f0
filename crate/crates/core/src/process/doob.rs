use serde::Serialize;

use crate::error::ProcessError;
use crate::model::{weighted_covariance, TradingGrid};
use crate::scalar::Scalar;

use super::ensemble::{Filtration, PathEnsemble};

/// Martingale and predictable parts of the power price, stored per path
/// and slot in canonical slot order.
#[derive(Debug, Clone, PartialEq)]
pub struct DoobParts<S> {
    pub martingale: Vec<Vec<S>>,
    pub predictable: Vec<Vec<S>>,
    /// `true` when `M(t0) = 0` and the first price sits in `A(t0)`;
    /// otherwise `M(t0) = Pi(t0)` and `A(t0) = 0`.
    pub normalized: bool,
}

/// Largest violations of the decomposition identities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DoobCheck {
    pub reconstruction: f64,
    pub martingale: f64,
    pub predictability: f64,
}

impl DoobCheck {
    pub fn max(&self) -> f64 {
        self.reconstruction.max(self.martingale).max(self.predictability)
    }
}

/// Covariance of the stacked `(Pi, G, G_em)` vector before and after a
/// drift change.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovarianceInvariance {
    pub dim: usize,
    pub max_deviation: f64,
    pub max_entry: f64,
}

impl CovarianceInvariance {
    pub fn holds(&self, tol: f64) -> bool {
        self.max_deviation <= tol
    }
}

fn max_gap<S: Scalar>(a: &S, b: &S) -> f64 {
    (a.clone() - b.clone()).magnitude().approx_f64()
}

/// Step at which the drift of `slot` must already be known: the step of the
/// previous trading time of the same delivery, or for the first trading
/// time the step before it (`None` is the root). A normalized first drift
/// holds the first price itself and is known at its own step.
fn known_at(grid: &TradingGrid, steps: &[usize], slot: usize, normalized: bool) -> Option<usize> {
    let j = grid.delivery_of_slot()[slot];
    if slot > grid.offset(j) {
        Some(steps[slot - 1])
    } else if normalized {
        Some(steps[slot])
    } else {
        steps[slot].checked_sub(1)
    }
}

fn node_key(filt: &Filtration, p: usize, at: Option<usize>) -> usize {
    at.map(|k| filt.node[p][k]).unwrap_or(0)
}

/// Splits every delivery's price path into a martingale and a predictable
/// drift using conditional expectations on the scenario tree.
pub fn doob_decompose<S: Scalar>(
    ensemble: &PathEnsemble<S>,
    grid: &TradingGrid,
    n_fuels: usize,
    normalize: bool,
) -> Result<DoobParts<S>, ProcessError> {
    let filt = ensemble.filtration(grid, n_fuels)?;
    let steps = grid.slot_steps();
    let np = ensemble.len();
    let n = grid.n_slots();
    let mut a = vec![vec![S::zero(); n]; np];
    for j in 0..grid.n_deliveries() {
        let slots = grid.slots(j);
        for s in slots.clone().skip(1) {
            let cond = ensemble.conditional(&filt, Some(steps[s - 1]), |p| ensemble.paths[p].pi[s].clone());
            for p in 0..np {
                a[p][s] = a[p][s - 1].clone() + cond[p].clone() - ensemble.paths[p].pi[s - 1].clone();
            }
        }
        if normalize {
            let first = slots.start;
            for p in 0..np {
                let level = ensemble.paths[p].pi[first].clone();
                for s in slots.clone() {
                    a[p][s] += level.clone();
                }
            }
        }
    }
    let m = (0..np).map(|p| (0..n).map(|s| ensemble.paths[p].pi[s].clone() - a[p][s].clone()).collect()).collect();
    Ok(DoobParts { martingale: m, predictable: a, normalized: normalize })
}

impl<S: Scalar> DoobParts<S> {
    /// Checks `Pi = M + A`, the one-step martingale property and
    /// predictability of `A` on the ensemble's tree.
    pub fn check(
        &self,
        ensemble: &PathEnsemble<S>,
        grid: &TradingGrid,
        n_fuels: usize,
    ) -> Result<DoobCheck, ProcessError> {
        let filt = ensemble.filtration(grid, n_fuels)?;
        let steps = grid.slot_steps();
        let np = ensemble.len();
        let mut out = DoobCheck { reconstruction: 0.0, martingale: 0.0, predictability: 0.0 };
        for p in 0..np {
            for s in 0..grid.n_slots() {
                let sum = self.martingale[p][s].clone() + self.predictable[p][s].clone();
                out.reconstruction = out.reconstruction.max(max_gap(&sum, &ensemble.paths[p].pi[s]));
            }
        }
        for j in 0..grid.n_deliveries() {
            for s in grid.slots(j).skip(1) {
                let at = Some(steps[s - 1]);
                let cond = ensemble.conditional(&filt, at, |p| self.martingale[p][s].clone());
                for p in 0..np {
                    out.martingale = out.martingale.max(max_gap(&cond[p], &self.martingale[p][s - 1]));
                }
            }
        }
        out.predictability = predictability_gap(&filt, grid, &self.predictable, self.normalized);
        Ok(out)
    }

    /// Deterministic drift that moves the expected price of every slot to
    /// `targets` (undiscounted, canonical order).
    pub fn drift_to(&self, ensemble: &PathEnsemble<S>, targets: &[S]) -> Vec<Vec<S>> {
        let table: Vec<S> = targets
            .iter()
            .enumerate()
            .map(|(s, t)| t.clone() - ensemble.mean_of(|p| self.martingale[p][s].clone()))
            .collect();
        vec![table; ensemble.len()]
    }
}

/// Largest spread of a per-path drift inside the information sets it must
/// be measurable with respect to.
fn predictability_gap<S: Scalar>(filt: &Filtration, grid: &TradingGrid, drift: &[Vec<S>], normalized: bool) -> f64 {
    let steps = grid.slot_steps();
    let mut gap: f64 = 0.0;
    for s in 0..grid.n_slots() {
        let at = known_at(grid, &steps, s, normalized);
        let mut first: std::collections::BTreeMap<usize, usize> = Default::default();
        for p in 0..drift.len() {
            let q = *first.entry(node_key(filt, p, at)).or_insert(p);
            gap = gap.max(max_gap(&drift[p][s], &drift[q][s]));
        }
    }
    gap
}

/// Replaces every path's power price by `M + drift`, where `drift[p][s]`
/// must be known one trading time before slot `s` on its delivery and `M`
/// is the unnormalized martingale part. Fuel and emission prices and the
/// weights are left unchanged.
pub fn shift_measure<S: Scalar>(
    ensemble: &PathEnsemble<S>,
    grid: &TradingGrid,
    n_fuels: usize,
    drift: &[Vec<S>],
) -> Result<PathEnsemble<S>, ProcessError> {
    let parts = doob_decompose(ensemble, grid, n_fuels, false)?;
    let filt = ensemble.filtration(grid, n_fuels)?;
    let n = grid.n_slots();
    if drift.len() != ensemble.len() || drift.iter().any(|d| d.len() != n) {
        return Err(ProcessError::Drift(format!("expected {} rows of {n} values", ensemble.len())));
    }
    let gap = predictability_gap(&filt, grid, drift, false);
    let scale = drift.iter().flatten().map(|x| x.magnitude().approx_f64()).fold(1.0, f64::max);
    if gap > 1e-12 * scale {
        return Err(ProcessError::Drift(format!("differs by {gap:e} between paths sharing an ancestor")));
    }
    let mut out = ensemble.clone();
    for (p, path) in out.paths.iter_mut().enumerate() {
        for s in 0..n {
            path.pi[s] = parts.martingale[p][s].clone() + drift[p][s].clone();
        }
    }
    Ok(out)
}

/// Compares the weighted covariance of `(Pi, G, G_em)` of two ensembles on
/// the same tree with the same weights.
pub fn verify_covariance_invariance<S: Scalar>(
    original: &PathEnsemble<S>,
    shifted: &PathEnsemble<S>,
    grid: &TradingGrid,
    n_fuels: usize,
) -> Result<CovarianceInvariance, ProcessError> {
    original.check(grid, n_fuels)?;
    shifted.check(grid, n_fuels)?;
    if original.len() != shifted.len() || original.paths.iter().zip(&shifted.paths).any(|(a, b)| a.weight != b.weight) {
        return Err(ProcessError::Drift("ensembles differ in paths or weights".into()));
    }
    let a = weighted_covariance(original, grid, n_fuels);
    let b = weighted_covariance(shifted, grid, n_fuels);
    let mut dev: f64 = 0.0;
    let mut big: f64 = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        dev = dev.max(max_gap(x, y));
        big = big.max(x.magnitude().approx_f64());
    }
    Ok(CovarianceInvariance { dim: a.nrows(), max_deviation: dev, max_entry: big })
}
