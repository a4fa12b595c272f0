use nalgebra::{DMatrix, DVector};

use super::covariance::{scenario_covariance, Covariance};
use super::index::ProducerLayout;
use super::scenario::Scenario;
use crate::error::ModelError;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlayerKind {
    Producer,
    Consumer,
}

/// What an inequality row bounds; used for reporting and saturation checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    RampUp { r: usize, j: usize },
    RampDown { r: usize, j: usize },
    CapacityUpper { r: usize, j: usize },
    CapacityLower { r: usize, j: usize },
    VolumeUpper { s: usize },
    VolumeLower { s: usize },
    FuelUpper { s: usize, l: usize },
    FuelLower { s: usize, l: usize },
    EmissionUpper { s: usize },
    EmissionLower { s: usize },
}

impl RowKind {
    pub fn touches_generation(&self) -> bool {
        matches!(
            self,
            RowKind::RampUp { .. }
                | RowKind::RampDown { .. }
                | RowKind::CapacityUpper { .. }
                | RowKind::CapacityLower { .. }
        )
    }
}

/// Exogenous data shared by all players: the covariance and the discounted
/// expected fuel and emission forwards.
#[derive(Debug, Clone)]
pub struct MarketData<S> {
    pub covariance: Covariance<S>,
    pub fuel_forwards: Vec<S>,
    pub emission_forwards: Vec<S>,
    pub slot_discounts: Vec<S>,
}

impl<S: Scalar> MarketData<S> {
    pub fn from_scenario(scenario: &Scenario<S>) -> Result<Self, ModelError> {
        scenario.check_shapes()?;
        let covariance = scenario_covariance(scenario)?;
        let d: Vec<S> = scenario.grid.slot_discounts().into_iter().map(S::lit).collect();
        let nl = scenario.n_fuels();
        let fuel_forwards = scenario
            .exogenous
            .fuel_forwards
            .iter()
            .enumerate()
            .map(|(k, g)| g.clone() * d[k / nl.max(1)].clone())
            .collect();
        let emission_forwards =
            scenario.exogenous.emission_forwards.iter().zip(&d).map(|(g, d)| g.clone() * d.clone()).collect();
        Ok(Self { covariance, fuel_forwards, emission_forwards, slot_discounts: d })
    }
}

/// One player's quadratic program
///
/// ```text
/// minimize  1/2 v' H v + (c + E_V price)' v
/// subject to  A v = a,  B v <= b
/// ```
///
/// which is the negated mean-variance utility. The first `n_slots`
/// coordinates of `v` are always the electricity positions `V`.
#[derive(Debug, Clone)]
pub struct PlayerProblem<S> {
    pub name: String,
    pub kind: PlayerKind,
    pub n_slots: usize,
    pub risk_aversion: S,
    /// `lambda Q`; zero outside the priced `(V, F, O)` block.
    pub hessian: DMatrix<S>,
    /// Linear cost with the electricity block left at zero.
    pub cost: DVector<S>,
    pub a_eq: DMatrix<S>,
    pub b_eq: DVector<S>,
    pub a_in: DMatrix<S>,
    pub b_in: DVector<S>,
    pub row_kinds: Vec<RowKind>,
    pub layout: Option<ProducerLayout>,
    /// Number of equality rows tying `V` to generation or demand, one per delivery.
    pub n_volume_rows: usize,
    /// A point satisfying all constraints.
    pub start: DVector<S>,
    /// `p_c D e^{-rT} s_c` summed over deliveries; zero for producers.
    pub retail_revenue: S,
}

impl<S: Scalar> PlayerProblem<S> {
    pub fn dim(&self) -> usize {
        self.hessian.nrows()
    }

    /// Linear term for a given discounted price vector.
    pub fn linear(&self, prices: &[S]) -> DVector<S> {
        let mut c = self.cost.clone();
        for (k, p) in prices.iter().enumerate() {
            c[k] += p.clone();
        }
        c
    }

    /// Mean-variance utility `Psi` at `v`, including retail revenue.
    pub fn utility(&self, v: &DVector<S>, prices: &[S]) -> S {
        let lin = self.linear(prices).dot(v);
        let quad = (&self.hessian * v).dot(v);
        self.retail_revenue.clone() - lin - quad / S::lit(2.0)
    }

    pub fn cast<T: Scalar>(&self) -> PlayerProblem<T> {
        let m = |x: &DMatrix<S>| x.map(|y| T::lit(y.approx_f64()));
        let v = |x: &DVector<S>| x.map(|y| T::lit(y.approx_f64()));
        PlayerProblem {
            name: self.name.clone(),
            kind: self.kind,
            n_slots: self.n_slots,
            risk_aversion: T::lit(self.risk_aversion.approx_f64()),
            hessian: m(&self.hessian),
            cost: v(&self.cost),
            a_eq: m(&self.a_eq),
            b_eq: v(&self.b_eq),
            a_in: m(&self.a_in),
            b_in: v(&self.b_in),
            row_kinds: self.row_kinds.clone(),
            layout: self.layout.clone(),
            n_volume_rows: self.n_volume_rows,
            start: v(&self.start),
            retail_revenue: T::lit(self.retail_revenue.approx_f64()),
        }
    }

    /// `Â1`: one row of ones per delivery over that delivery's slots.
    pub fn delivery_sums(&self) -> DMatrix<S> {
        self.a_eq.view((0, 0), (self.n_volume_rows, self.n_slots)).into_owned()
    }
}

struct Rows<S> {
    a: Vec<Vec<(usize, S)>>,
    b: Vec<S>,
    kinds: Vec<RowKind>,
}

impl<S: Scalar> Rows<S> {
    fn new() -> Self {
        Self { a: Vec::new(), b: Vec::new(), kinds: Vec::new() }
    }

    fn push(&mut self, coeffs: Vec<(usize, S)>, rhs: S, kind: Option<RowKind>) {
        self.a.push(coeffs);
        self.b.push(rhs);
        if let Some(k) = kind {
            self.kinds.push(k);
        }
    }

    fn dense(&self, dim: usize) -> (DMatrix<S>, DVector<S>) {
        let mut m = DMatrix::from_element(self.a.len(), dim, S::zero());
        for (i, row) in self.a.iter().enumerate() {
            for (k, c) in row {
                m[(i, *k)] += c.clone();
            }
        }
        (m, DVector::from_vec(self.b.clone()))
    }
}

fn box_rows<S: Scalar>(rows: &mut Rows<S>, idx: usize, bound: &S, upper: RowKind, lower: RowKind) {
    rows.push(vec![(idx, S::one())], bound.clone(), Some(upper));
    rows.push(vec![(idx, -S::one())], bound.clone(), Some(lower));
}

/// Builds producer `p`'s problem in canonical variable order.
pub fn assemble_producer<S: Scalar>(scenario: &Scenario<S>, market: &MarketData<S>, p: usize) -> PlayerProblem<S> {
    let producer = &scenario.producers[p];
    let grid = &scenario.grid;
    let lay = ProducerLayout::new(grid, &scenario.fuels, producer);
    let (n, nl, nj, nr) = (lay.n_slots, lay.n_fuels, lay.n_deliveries, lay.n_plants());
    let dim = lay.dim();
    let plant = |r: usize| &producer.plants[lay.plant_order[r]];

    let lam = producer.risk_aversion.clone();
    let pd = lay.priced_dim();
    let mut hessian = DMatrix::from_element(dim, dim, S::zero());
    for a in 0..pd {
        for b in 0..pd {
            hessian[(a, b)] = lam.clone() * market.covariance.matrix[(a, b)].clone();
        }
    }
    let mut cost = DVector::from_element(dim, S::zero());
    for s in 0..n {
        for l in 0..nl {
            cost[lay.f(s, l)] = market.fuel_forwards[s * nl + l].clone();
        }
        cost[lay.o(s)] = market.emission_forwards[s].clone();
    }

    let mut eq = Rows::new();
    for j in 0..nj {
        let mut row: Vec<(usize, S)> = grid.slots(j).map(|s| (lay.v(s), S::one())).collect();
        row.extend((0..nr).map(|r| (lay.w(j, r), S::one())));
        eq.push(row, S::zero(), None);
    }
    for l in 0..nl {
        for j in 0..nj {
            let mut row: Vec<(usize, S)> = (0..nr)
                .filter(|&r| lay.plant_fuel[r] == l)
                .map(|r| (lay.w(j, r), plant(r).efficiency.clone()))
                .collect();
            row.extend(grid.slots(j).map(|s| (lay.f(s, l), -S::one())));
            eq.push(row, S::zero(), None);
        }
    }
    let mut em: Vec<(usize, S)> = (0..n).map(|s| (lay.o(s), S::one())).collect();
    for j in 0..nj {
        for r in 0..nr {
            let g = scenario.fuels[lay.plant_fuel[r]].emission_intensity.clone();
            em.push((lay.w(j, r), -g));
        }
    }
    eq.push(em, S::zero(), None);

    let mut ineq = Rows::new();
    for r in 0..nr {
        let pl = plant(r);
        for j in 0..nj.saturating_sub(1) {
            ineq.push(
                vec![(lay.w(j + 1, r), S::one()), (lay.w(j, r), -S::one())],
                pl.ramp_up.clone(),
                Some(RowKind::RampUp { r, j }),
            );
            ineq.push(
                vec![(lay.w(j + 1, r), -S::one()), (lay.w(j, r), S::one())],
                -pl.ramp_down.clone(),
                Some(RowKind::RampDown { r, j }),
            );
        }
    }
    for j in 0..nj {
        for r in 0..nr {
            ineq.push(vec![(lay.w(j, r), S::one())], plant(r).capacity.clone(), Some(RowKind::CapacityUpper { r, j }));
            ineq.push(vec![(lay.w(j, r), -S::one())], S::zero(), Some(RowKind::CapacityLower { r, j }));
        }
    }
    let b = &scenario.bounds;
    for s in 0..n {
        for l in 0..nl {
            box_rows(&mut ineq, lay.f(s, l), &b.f_trade, RowKind::FuelUpper { s, l }, RowKind::FuelLower { s, l });
        }
    }
    for s in 0..n {
        box_rows(&mut ineq, lay.o(s), &b.f_trade, RowKind::EmissionUpper { s }, RowKind::EmissionLower { s });
    }
    for s in 0..n {
        box_rows(&mut ineq, lay.v(s), &b.v_trade, RowKind::VolumeUpper { s }, RowKind::VolumeLower { s });
    }

    let (a_eq, b_eq) = eq.dense(dim);
    let (a_in, b_in) = ineq.dense(dim);
    PlayerProblem {
        name: producer.name.clone(),
        kind: PlayerKind::Producer,
        n_slots: n,
        risk_aversion: lam,
        hessian,
        cost,
        a_eq,
        b_eq,
        a_in,
        b_in,
        row_kinds: ineq.kinds,
        layout: Some(lay),
        n_volume_rows: nj,
        start: DVector::from_element(dim, S::zero()),
        retail_revenue: S::zero(),
    }
}

/// Builds consumer `c`'s problem over its electricity positions.
pub fn assemble_consumer<S: Scalar>(scenario: &Scenario<S>, market: &MarketData<S>, c: usize) -> PlayerProblem<S> {
    let consumer = &scenario.consumers[c];
    let grid = &scenario.grid;
    let n = grid.n_slots();
    let nj = grid.n_deliveries();
    let lam = consumer.risk_aversion.clone();
    let q1 = market.covariance.q1();
    let hessian = q1.map(|x| lam.clone() * x);

    let mut eq = Rows::new();
    let mut start = DVector::from_element(n, S::zero());
    let mut retail = S::zero();
    for j in 0..nj {
        let target = consumer.demand_share.clone() * scenario.exogenous.demand[j].clone();
        let k = S::lit(grid.trading_times[j].len() as f64);
        for s in grid.slots(j) {
            start[s] = target.clone() / k.clone();
        }
        retail += consumer.retail_price.clone() * target.clone() * S::lit(grid.discount(j));
        eq.push(grid.slots(j).map(|s| (s, S::one())).collect(), target, None);
    }
    let mut ineq = Rows::new();
    for s in 0..n {
        box_rows(&mut ineq, s, &scenario.bounds.v_trade, RowKind::VolumeUpper { s }, RowKind::VolumeLower { s });
    }
    let (a_eq, b_eq) = eq.dense(n);
    let (a_in, b_in) = ineq.dense(n);
    PlayerProblem {
        name: consumer.name.clone(),
        kind: PlayerKind::Consumer,
        n_slots: n,
        risk_aversion: lam,
        hessian,
        cost: DVector::from_element(n, S::zero()),
        a_eq,
        b_eq,
        a_in,
        b_in,
        row_kinds: ineq.kinds,
        layout: None,
        n_volume_rows: nj,
        start,
        retail_revenue: retail,
    }
}

/// All players, producers first, in scenario order.
pub fn assemble_all<S: Scalar>(scenario: &Scenario<S>) -> Result<(MarketData<S>, Vec<PlayerProblem<S>>), ModelError> {
    let market = MarketData::from_scenario(scenario)?;
    let mut players: Vec<PlayerProblem<S>> =
        (0..scenario.producers.len()).map(|p| assemble_producer(scenario, &market, p)).collect();
    players.extend((0..scenario.consumers.len()).map(|c| assemble_consumer(scenario, &market, c)));
    Ok((market, players))
}
