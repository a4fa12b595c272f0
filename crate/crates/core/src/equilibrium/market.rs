use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use rayon::ThreadPool;

use crate::error::{EquilibriumError, ModelError};
use crate::linalg::inf_norm;
use crate::model::{assemble_all, MarketData, PlayerKind, PlayerProblem, Scenario, TradingGrid};
use crate::qp::{response_jacobian, solve_qp, PlayerSolution, QpOptions, WarmStart};
use crate::scalar::Real;

/// Assembled player problems plus the market-level data the solvers need.
#[derive(Debug, Clone)]
pub struct Market<T: Real> {
    pub grid: TradingGrid,
    pub players: Vec<PlayerProblem<T>>,
    pub n_producers: usize,
    pub data: MarketData<T>,
    /// Bound on each discounted expected price.
    pub pi_max: T,
    pub v_trade: T,
    pub f_trade: T,
    /// Merit-order start: per delivery, the cheapest discounted marginal cost.
    pub merit_order: Vec<T>,
}

impl<T: Real> Market<T> {
    pub fn new(scenario: &Scenario<T>) -> Result<Self, ModelError> {
        let (data, players) = assemble_all(scenario)?;
        let grid = scenario.grid.clone();
        let nl = scenario.n_fuels();
        let mut merit_order = vec![T::zero(); grid.n_slots()];
        for j in 0..grid.n_deliveries() {
            let slots = grid.slots(j);
            let k = T::lit(slots.len() as f64);
            let mut best: Option<T> = None;
            for producer in &scenario.producers {
                for plant in &producer.plants {
                    let Some(l) = scenario.fuel_index(&plant.fuel) else { continue };
                    let g = scenario.fuels[l].emission_intensity;
                    let mut cost = T::zero();
                    for s in slots.clone() {
                        cost += plant.efficiency * data.fuel_forwards[s * nl + l] + g * data.emission_forwards[s];
                    }
                    cost /= k;
                    best = Some(best.map_or(cost, |b: T| b.min(cost)));
                }
            }
            for s in slots {
                merit_order[s] = best.unwrap_or_else(T::zero);
            }
        }
        Ok(Self {
            grid,
            players,
            n_producers: scenario.producers.len(),
            data,
            pi_max: scenario.bounds.pi_max,
            v_trade: scenario.bounds.v_trade,
            f_trade: scenario.bounds.f_trade,
            merit_order,
        })
    }

    /// Casts an `f64` scenario to `T` before assembly.
    pub fn from_f64(scenario: &Scenario<f64>) -> Result<Self, ModelError> {
        Self::new(&scenario.cast::<T>())
    }

    pub fn n_slots(&self) -> usize {
        self.grid.n_slots()
    }

    pub fn n_deliveries(&self) -> usize {
        self.grid.n_deliveries()
    }

    pub fn producers(&self) -> &[PlayerProblem<T>] {
        &self.players[..self.n_producers]
    }

    pub fn consumers(&self) -> &[PlayerProblem<T>] {
        &self.players[self.n_producers..]
    }

    /// `Â1`: delivery-sum matrix over slots.
    pub fn delivery_sums(&self) -> DMatrix<T> {
        let mut a = DMatrix::zeros(self.n_deliveries(), self.n_slots());
        for j in 0..self.n_deliveries() {
            for s in self.grid.slots(j) {
                a[(j, s)] = T::one();
            }
        }
        a
    }

    /// Clamps prices into the open box `(-pi_max, pi_max)`.
    pub fn clamp(&self, prices: &mut [T]) {
        let m = self.pi_max * (T::one() - T::lit(1e-12));
        for p in prices {
            *p = p.max(-m).min(m);
        }
    }

    /// Solves every player's problem at `prices` in parallel, on `pool` or
    /// the global pool. Results are in player order regardless of scheduling.
    pub fn evaluate(
        &self,
        prices: &[T],
        warm: Option<&[WarmStart<T>]>,
        opts: &QpOptions,
        pool: Option<&ThreadPool>,
    ) -> Result<Evaluation<T>, EquilibriumError> {
        let n = self.n_slots();
        if prices.len() != n {
            return Err(EquilibriumError::InitialPrices { got: prices.len(), expected: n });
        }
        let solve = |k: usize| {
            let w = warm.and_then(|w| w.get(k));
            solve_qp(&self.players[k], prices, w, opts)
                .map_err(|source| EquilibriumError::Player { player: self.players[k].name.clone(), source })
        };
        let results: Vec<Result<PlayerSolution<T>, EquilibriumError>> = match pool {
            Some(pool) => pool.install(|| (0..self.players.len()).into_par_iter().map(solve).collect()),
            None => (0..self.players.len()).into_par_iter().map(solve).collect(),
        };
        let solutions = results.into_iter().collect::<Result<Vec<_>, _>>()?;
        let mut excess = DVector::zeros(n);
        for s in &solutions {
            excess += s.v.rows(0, n);
        }
        Ok(Evaluation { prices: prices.to_vec(), excess, solutions })
    }

    /// Sum of the players' response Jacobians at an evaluation.
    pub fn jacobian(&self, eval: &Evaluation<T>) -> DMatrix<T> {
        let n = self.n_slots();
        let mut j = DMatrix::zeros(n, n);
        for (p, s) in self.players.iter().zip(&eval.solutions) {
            j += response_jacobian(p, s).matrix;
        }
        j
    }

    /// Sum of the producers' response Jacobians.
    pub fn producer_jacobian(&self, eval: &Evaluation<T>) -> DMatrix<T> {
        let n = self.n_slots();
        let mut j = DMatrix::zeros(n, n);
        for (p, s) in self.players.iter().zip(&eval.solutions) {
            if p.kind == PlayerKind::Producer {
                j += response_jacobian(p, s).matrix;
            }
        }
        j
    }
}

/// Best responses of all players at one price vector.
#[derive(Debug, Clone)]
pub struct Evaluation<T: Real> {
    pub prices: Vec<T>,
    /// Aggregate excess volume `Z̃`.
    pub excess: DVector<T>,
    pub solutions: Vec<PlayerSolution<T>>,
}

impl<T: Real> Evaluation<T> {
    pub fn residual(&self) -> T {
        inf_norm(&self.excess)
    }

    pub fn kkt_max(&self) -> f64 {
        self.solutions.iter().map(|s| s.residuals.max()).fold(0.0, f64::max)
    }

    /// Sum of optimal utilities; convex in prices with gradient `-Z̃`.
    pub fn value(&self) -> T {
        self.solutions.iter().fold(T::zero(), |a, s| a + s.utility)
    }

    pub fn warm_starts(&self) -> Vec<WarmStart<T>> {
        self.solutions.iter().map(|s| s.warm.clone()).collect()
    }
}

/// Aggregate excess volume `Z̃` at the given discounted expected prices.
pub fn excess_volume<T: Real>(
    market: &Market<T>,
    prices: &[T],
    opts: &QpOptions,
) -> Result<DVector<T>, EquilibriumError> {
    Ok(market.evaluate(prices, None, opts, None)?.excess)
}

/// Builds a worker pool capped by `threads`, or by `EQUITERM_THREADS` when
/// `threads` is `None`. Returns `None` when neither is set.
pub fn worker_pool(threads: Option<usize>) -> Option<ThreadPool> {
    let n = threads.or_else(|| std::env::var("EQUITERM_THREADS").ok().and_then(|v| v.trim().parse().ok()))?;
    rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build().ok()
}
