use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::market::{worker_pool, Evaluation, Market};
use crate::error::EquilibriumError;
use crate::qp::{PlayerSolution, QpOptions};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Tatonnement,
    Newton,
    Hybrid,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Tatonnement => "tatonnement",
            Method::Newton => "newton",
            Method::Hybrid => "hybrid",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "tatonnement" => Ok(Method::Tatonnement),
            "newton" => Ok(Method::Newton),
            "hybrid" => Ok(Method::Hybrid),
            _ => Err(format!("unknown method {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EquilibriumOptions {
    pub method: Method,
    /// Clearing tolerance on `‖Z̃‖∞`, in volume units.
    pub tol: f64,
    /// Largest player KKT residual accepted at the solution.
    pub kkt_tol: f64,
    pub max_iter: usize,
    /// Price-adjustment steps taken before switching to Newton (hybrid only).
    pub warmup: usize,
    pub qp: QpOptions,
    /// Worker cap; falls back to `EQUITERM_THREADS`, then the global pool.
    pub threads: Option<usize>,
    /// Discounted start prices; the merit-order start is used otherwise.
    pub initial_prices: Option<Vec<f64>>,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        Self {
            method: Method::Hybrid,
            tol: 1e-8,
            kkt_tol: 1e-8,
            max_iter: 200,
            warmup: 2,
            qp: QpOptions::default(),
            threads: None,
            initial_prices: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Converged,
    /// Cleared, but some best response misses the KKT tolerance.
    InaccurateResponses,
    MaxIterations,
    /// No step reduces the residual and prices sit on the price bound.
    SaturationWall,
    /// No step reduces the residual inside the price box.
    Stalled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepKind {
    Start,
    Tatonnement,
    Newton,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub kind: StepKind,
    pub step: f64,
    pub residual: f64,
    pub prices: Vec<f64>,
}

/// Whether any equilibrium quantity touches its trading or price bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BoundContacts {
    pub volume: bool,
    pub fuel: bool,
    pub price: bool,
}

impl BoundContacts {
    pub fn any(&self) -> bool {
        self.volume || self.fuel || self.price
    }
}

#[derive(Debug, Clone)]
pub struct EquilibriumResult<T: Real> {
    /// Discounted expected prices in slot order.
    pub prices: Vec<T>,
    /// The same prices compounded to each delivery date.
    pub undiscounted_prices: Vec<T>,
    pub excess: Vec<T>,
    pub clearing_residual: T,
    pub kkt_residual: f64,
    pub player_names: Vec<String>,
    pub player_solutions: Vec<PlayerSolution<T>>,
    /// `prices' Z̃`, the market agent's objective; zero when markets clear.
    pub market_objective: T,
    pub bound_contacts: BoundContacts,
    pub method: Method,
    pub status: Status,
    pub iterations: usize,
    pub newton_steps: usize,
    pub evaluations: usize,
    pub trace: Vec<TraceEntry>,
}

impl<T: Real> EquilibriumResult<T> {
    pub fn converged(&self) -> bool {
        self.status == Status::Converged
    }
}

struct Search<'a, T: Real> {
    market: &'a Market<T>,
    opts: &'a EquilibriumOptions,
    pool: Option<rayon::ThreadPool>,
    evaluations: usize,
}

impl<'a, T: Real> Search<'a, T> {
    fn eval(&mut self, prices: &[T], from: Option<&Evaluation<T>>) -> Result<Evaluation<T>, EquilibriumError> {
        self.evaluations += 1;
        let warm = from.map(|e| e.warm_starts());
        self.market.evaluate(prices, warm.as_deref(), &self.opts.qp, self.pool.as_ref())
    }

    fn trial(&self, cur: &Evaluation<T>, dir: &DVector<T>, t: T) -> Vec<T> {
        let mut p: Vec<T> = cur.prices.iter().zip(dir.iter()).map(|(&p, &d)| p + t * d).collect();
        self.market.clamp(&mut p);
        p
    }

    /// Backtracks along `dir` until `‖Z̃‖∞` drops by a sufficient fraction.
    fn residual_search(
        &mut self,
        cur: &Evaluation<T>,
        dir: &DVector<T>,
        t0: T,
        halvings: usize,
    ) -> Result<Option<(Evaluation<T>, T)>, EquilibriumError> {
        let r0 = cur.residual();
        let mut t = t0;
        for _ in 0..=halvings {
            let next = self.eval(&self.trial(cur, dir, t), Some(cur))?;
            if next.residual() <= r0 * (T::one() - T::lit(1e-4) * t.min(T::one())) && next.residual() < r0 {
                return Ok(Some((next, t)));
            }
            t *= T::lit(0.5);
        }
        Ok(None)
    }

    /// Armijo backtracking on the convex value function along `Z̃`.
    fn value_search(&mut self, cur: &Evaluation<T>, t0: T) -> Result<Option<(Evaluation<T>, T)>, EquilibriumError> {
        let dir = cur.excess.clone();
        let g2 = dir.norm_squared();
        let f0 = cur.value();
        let mut t = t0;
        for _ in 0..40 {
            let p = self.trial(cur, &dir, t);
            let next = self.eval(&p, Some(cur))?;
            let moved: T = p.iter().zip(&cur.prices).map(|(&a, &b)| (a - b) * (a - b)).fold(T::zero(), |a, b| a + b);
            if moved > T::zero() && next.value() <= f0 - T::lit(1e-4) * t * g2 {
                return Ok(Some((next, t)));
            }
            t *= T::lit(0.5);
        }
        Ok(None)
    }

    /// Newton step on the current affine piece with a Tikhonov shift
    /// `J - sigma I`. The shift starts at `1e-10 ‖J‖` and grows until a
    /// step of reasonable length reduces the residual; large shifts turn
    /// the step into a short price adjustment along `Z̃`.
    fn newton_step(&mut self, cur: &Evaluation<T>) -> Result<Option<(Evaluation<T>, T)>, EquilibriumError> {
        let n = cur.excess.len();
        let j = self.market.jacobian(cur);
        let scale = j.norm().max(T::lit(1e-300));
        for rel in [1e-10, 1e-6, 1e-3, 1e-1, 1.0, 10.0] {
            let shifted = &j - DMatrix::identity(n, n) * (T::lit(rel) * scale);
            let Some(d) = shifted.lu().solve(&(-&cur.excess)) else { continue };
            if !d.iter().all(|x| x.is_finite()) {
                continue;
            }
            if let Some(found) = self.residual_search(cur, &d, T::one(), 12)? {
                return Ok(Some(found));
            }
        }
        Ok(None)
    }

    fn default_step(&self, cur: &Evaluation<T>) -> T {
        let norm = self.market.jacobian(cur).norm();
        if norm > T::zero() {
            T::one() / norm
        } else {
            T::one()
        }
    }
}

fn bb_step<T: Real>(prev: &Evaluation<T>, cur: &Evaluation<T>) -> Option<T> {
    let s = DVector::from_iterator(cur.prices.len(), cur.prices.iter().zip(&prev.prices).map(|(&a, &b)| a - b));
    let y = &prev.excess - &cur.excess;
    let sy = s.dot(&y);
    (sy > T::zero()).then(|| s.norm_squared() / sy)
}

fn start_prices<T: Real>(market: &Market<T>, opts: &EquilibriumOptions) -> Result<Vec<T>, EquilibriumError> {
    let n = market.n_slots();
    let mut p = match &opts.initial_prices {
        Some(v) if v.len() != n => return Err(EquilibriumError::InitialPrices { got: v.len(), expected: n }),
        Some(v) => v.iter().map(|&x| T::lit(x)).collect(),
        None => market.merit_order.clone(),
    };
    market.clamp(&mut p);
    Ok(p)
}

fn at_price_bound<T: Real>(market: &Market<T>, prices: &[T]) -> bool {
    let m = market.pi_max * (T::one() - T::lit(1e-9));
    prices.iter().any(|p| p.abs() >= m)
}

fn bound_contacts<T: Real>(market: &Market<T>, eval: &Evaluation<T>) -> BoundContacts {
    let near = |x: T, b: T| x.abs() >= b * (T::one() - T::lit(1e-9));
    let n = market.n_slots();
    let mut c = BoundContacts { price: at_price_bound(market, &eval.prices), ..Default::default() };
    for (p, s) in market.players.iter().zip(&eval.solutions) {
        c.volume |= s.v.rows(0, n).iter().any(|&x| near(x, market.v_trade));
        if let Some(l) = &p.layout {
            c.fuel |= s.v.rows(n, l.priced_dim() - n).iter().any(|&x| near(x, market.f_trade));
        }
    }
    c
}

fn record<T: Real>(trace: &mut Vec<TraceEntry>, iteration: usize, kind: StepKind, step: T, eval: &Evaluation<T>) {
    trace.push(TraceEntry {
        iteration,
        kind,
        step: step.approx_f64(),
        residual: eval.residual().approx_f64(),
        prices: eval.prices.iter().map(|p| p.approx_f64()).collect(),
    });
}

/// Finds discounted expected prices at which aggregate positions clear.
///
/// Non-convergence is reported through [`Status`] with the best iterate;
/// errors are reserved for malformed input and failed player solves.
pub fn solve_equilibrium<T: Real>(
    market: &Market<T>,
    opts: &EquilibriumOptions,
) -> Result<EquilibriumResult<T>, EquilibriumError> {
    let mut search = Search { market, opts, pool: worker_pool(opts.threads), evaluations: 0 };
    let tol = T::lit(opts.tol);
    let mut cur = search.eval(&start_prices(market, opts)?, None)?;
    let mut prev: Option<Evaluation<T>> = None;
    let mut trace = Vec::new();
    record(&mut trace, 0, StepKind::Start, T::zero(), &cur);
    let mut newton_steps = 0;
    let mut iterations = 0;
    let mut status = Status::MaxIterations;

    while iterations < opts.max_iter {
        if cur.residual() <= tol {
            status = if cur.kkt_max() <= opts.kkt_tol { Status::Converged } else { Status::InaccurateResponses };
            break;
        }
        iterations += 1;
        let use_newton = match opts.method {
            Method::Tatonnement => false,
            Method::Newton => true,
            Method::Hybrid => iterations > opts.warmup,
        };
        let mut accepted = None;
        if use_newton {
            if let Some((next, t)) = search.newton_step(&cur)? {
                newton_steps += 1;
                accepted = Some((next, t, StepKind::Newton));
            }
        }
        if accepted.is_none() {
            let t0 = prev.as_ref().and_then(|p| bb_step(p, &cur)).unwrap_or_else(|| search.default_step(&cur));
            let found = if opts.method == Method::Tatonnement {
                search.value_search(&cur, t0)?
            } else {
                match search.residual_search(&cur, &cur.excess.clone(), t0, 40)? {
                    Some(x) => Some(x),
                    None => search.value_search(&cur, t0)?,
                }
            };
            accepted = found.map(|(next, t)| (next, t, StepKind::Tatonnement));
        }
        match accepted {
            Some((next, t, kind)) => {
                record(&mut trace, iterations, kind, t, &next);
                prev = Some(std::mem::replace(&mut cur, next));
            }
            None => {
                status = if at_price_bound(market, &cur.prices) { Status::SaturationWall } else { Status::Stalled };
                break;
            }
        }
    }
    if status == Status::MaxIterations && cur.residual() <= tol {
        status = if cur.kkt_max() <= opts.kkt_tol { Status::Converged } else { Status::InaccurateResponses };
    } else if status == Status::MaxIterations && at_price_bound(market, &cur.prices) {
        status = Status::SaturationWall;
    }

    let discounts = &market.data.slot_discounts;
    let market_objective = cur.prices.iter().zip(cur.excess.iter()).fold(T::zero(), |a, (&p, &z)| a + p * z);
    Ok(EquilibriumResult {
        undiscounted_prices: cur.prices.iter().zip(discounts).map(|(&p, &d)| p / d).collect(),
        excess: cur.excess.iter().copied().collect(),
        clearing_residual: cur.residual(),
        kkt_residual: cur.kkt_max(),
        player_names: market.players.iter().map(|p| p.name.clone()).collect(),
        market_objective,
        bound_contacts: bound_contacts(market, &cur),
        method: opts.method,
        status,
        iterations,
        newton_steps,
        evaluations: search.evaluations,
        trace,
        prices: cur.prices,
        player_solutions: cur.solutions,
    })
}
