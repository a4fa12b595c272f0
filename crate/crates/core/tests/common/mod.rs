#![allow(dead_code)]

use equiterm::model::{
    Bounds, Consumer, CovarianceBlocks, ExogenousModel, Fuel, PlayerKind, PlayerProblem, PowerPlant, Producer,
    Scenario, TradingGrid, SCHEMA,
};
use equiterm::process::{PathEnsemble, PathRecord};
use equiterm::qp::{response_jacobian, solve_qp, PlayerSolution, QpOptions};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn blocks(q: &DMatrix<f64>, n: usize) -> CovarianceBlocks<f64> {
    let m = q.nrows() - n;
    let rows = |r0: usize, c0: usize, nr: usize, nc: usize| -> Vec<Vec<f64>> {
        (0..nr).map(|i| (0..nc).map(|j| q[(r0 + i, c0 + j)]).collect()).collect()
    };
    CovarianceBlocks { q1: rows(0, 0, n, n), q2: rows(0, n, n, m), q3: rows(n, n, m, m) }
}

pub fn plant(name: &str, fuel: &str, capacity: f64, efficiency: f64) -> PowerPlant<f64> {
    PowerPlant { name: name.into(), fuel: fuel.into(), capacity, ramp_up: capacity, ramp_down: -capacity, efficiency }
}

pub fn consumer(name: &str, risk_aversion: f64, demand_share: f64) -> Consumer<f64> {
    Consumer { name: name.into(), risk_aversion, demand_share, retail_price: 60.0 }
}

pub fn gas() -> Fuel<f64> {
    Fuel { name: "gas".into(), emission_intensity: 0.4 }
}

/// Covariance of `(Pi, G, G_em)` for one slot and one fuel.
pub fn desk_covariance() -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 1.0, 0.2, 0.5, 0.2, 2.0])
}

/// One delivery, one trading time: a gas plant (capacity 10, efficiency 2)
/// and one consumer with demand 5. Gas trades at 10, emissions at 20.
pub fn desk() -> Scenario<f64> {
    Scenario {
        schema: SCHEMA.into(),
        grid: TradingGrid::new(vec![1.0], vec![vec![1.0]], 0.0),
        fuels: vec![gas()],
        producers: vec![Producer {
            name: "gen".into(),
            risk_aversion: 0.5,
            plants: vec![plant("ccgt", "gas", 10.0, 2.0)],
        }],
        consumers: vec![consumer("retail", 1.0, 1.0)],
        exogenous: ExogenousModel {
            demand: vec![5.0],
            fuel_forwards: vec![10.0],
            emission_forwards: vec![20.0],
            covariance: Some(blocks(&desk_covariance(), 1)),
            ensemble: None,
        },
        bounds: Bounds { v_trade: 1000.0, f_trade: 1000.0, pi_max: 1000.0 },
    }
}

/// Closed-form equilibrium price of [`desk`]: marginal cost plus the
/// producer's risk premium on the hedged output `s = (-1, 2, 0.4)`.
pub fn desk_price() -> f64 {
    let s = nalgebra::DVector::from_vec(vec![-1.0, 2.0, 0.4]);
    let var = (desk_covariance() * &s).dot(&s);
    2.0 * 10.0 + 0.4 * 20.0 + 5.0 * 0.5 * var
}

/// One delivery, two trading times, identity price covariance and a
/// consumer with unit risk aversion.
pub fn two_slot() -> Scenario<f64> {
    let mut q = DMatrix::identity(6, 6);
    q[(2, 3)] = 0.1;
    q[(3, 2)] = 0.1;
    Scenario {
        schema: SCHEMA.into(),
        grid: TradingGrid::new(vec![1.0], vec![vec![0.5, 1.0]], 0.0),
        fuels: vec![gas()],
        producers: vec![Producer {
            name: "gen".into(),
            risk_aversion: 1.0,
            plants: vec![plant("ccgt", "gas", 10.0, 2.0)],
        }],
        consumers: vec![consumer("retail", 1.0, 1.0)],
        exogenous: ExogenousModel {
            demand: vec![5.0],
            fuel_forwards: vec![10.0, 10.0],
            emission_forwards: vec![20.0, 20.0],
            covariance: Some(blocks(&q, 2)),
            ensemble: None,
        },
        bounds: Bounds { v_trade: 1000.0, f_trade: 1000.0, pi_max: 1000.0 },
    }
}

/// Random positive definite matrix with the given per-coordinate scales.
pub fn random_covariance(rng: &mut ChaCha8Rng, scales: &[f64]) -> DMatrix<f64> {
    let n = scales.len();
    let b = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let c = &b * b.transpose() / n as f64 + DMatrix::identity(n, n) * 0.3;
    DMatrix::from_fn(n, n, |i, j| scales[i] * scales[j] * c[(i, j)])
}

/// Seeded random market: 1-3 producers, 1-3 consumers, 1-4 deliveries
/// with 1-3 trading times each, demand inside total capacity.
pub fn random_scenario(seed: u64) -> Scenario<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nj = rng.gen_range(1..=4);
    let mut trading_times = Vec::new();
    let deliveries: Vec<f64> = (0..nj).map(|j| 1.0 + j as f64).collect();
    for &t in &deliveries {
        let k = rng.gen_range(1..=3);
        trading_times.push((0..k).map(|i| t - 0.9 + 0.9 * (i + 1) as f64 / k as f64).collect());
    }
    let grid = TradingGrid::new(deliveries, trading_times, 0.02);
    let n = grid.n_slots();
    let fuels = vec![gas(), Fuel { name: "coal".into(), emission_intensity: 0.9 }];

    let np = rng.gen_range(1..=3);
    let mut capacity = 0.0;
    let producers: Vec<Producer<f64>> = (0..np)
        .map(|p| {
            let nr = rng.gen_range(1..=2);
            let plants = (0..nr)
                .map(|r| {
                    let cap = rng.gen_range(5.0..15.0);
                    capacity += cap;
                    let fuel = if rng.gen_bool(0.5) { "gas" } else { "coal" };
                    plant(&format!("p{p}u{r}"), fuel, cap, rng.gen_range(1.5..2.5))
                })
                .collect();
            Producer { name: format!("producer{p}"), risk_aversion: rng.gen_range(0.2..1.0), plants }
        })
        .collect();
    let nc = rng.gen_range(1..=3);
    let raw: Vec<f64> = (0..nc).map(|_| rng.gen_range(0.5..1.5)).collect();
    let total: f64 = raw.iter().sum();
    let mut consumers: Vec<Consumer<f64>> = raw
        .iter()
        .enumerate()
        .map(|(c, w)| consumer(&format!("retail{c}"), rng.gen_range(0.2..1.0), w / total))
        .collect();
    let drift: f64 = consumers.iter().map(|c| c.demand_share).sum::<f64>() - 1.0;
    consumers[0].demand_share -= drift;

    let demand = (0..nj).map(|_| capacity * rng.gen_range(0.3..0.7)).collect();
    let mut fuel_forwards = Vec::with_capacity(2 * n);
    let mut emission_forwards = Vec::with_capacity(n);
    for _ in 0..n {
        fuel_forwards.push(rng.gen_range(8.0..12.0));
        fuel_forwards.push(rng.gen_range(4.0..6.0));
        emission_forwards.push(rng.gen_range(15.0..25.0));
    }
    let mut scales = vec![2.0; n];
    scales.extend(std::iter::repeat_n(1.0, 2 * n));
    scales.extend(std::iter::repeat_n(1.5, n));
    let q = random_covariance(&mut rng, &scales);
    Scenario {
        schema: SCHEMA.into(),
        grid,
        fuels,
        producers,
        consumers,
        exogenous: ExogenousModel {
            demand,
            fuel_forwards,
            emission_forwards,
            covariance: Some(blocks(&q, n)),
            ensemble: None,
        },
        bounds: Bounds { v_trade: 1000.0, f_trade: 1000.0, pi_max: 1000.0 },
    }
}

/// Largest gap between a player's analytic response Jacobian at `prices`
/// and central differences with step `h`. `None` when either difference
/// point leaves the affine piece, where the comparison is meaningless.
pub fn fd_gap(p: &PlayerProblem<f64>, prices: &[f64], h: f64) -> Option<f64> {
    let opts = QpOptions::default();
    let base = solve_qp(p, prices, None, &opts).ok()?;
    if base.on_boundary {
        return None;
    }
    let jac = response_jacobian(p, &base).matrix;
    let n = prices.len();
    let mut gap: f64 = 0.0;
    for k in 0..n {
        let mut up = prices.to_vec();
        let mut down = prices.to_vec();
        up[k] += h;
        down[k] -= h;
        let su = solve_qp(p, &up, Some(&base.warm), &opts).ok()?;
        let sd = solve_qp(p, &down, Some(&base.warm), &opts).ok()?;
        if su.active_set != base.active_set || sd.active_set != base.active_set {
            return None;
        }
        for s in 0..n {
            let fd = (su.v[s] - sd.v[s]) / (2.0 * h);
            gap = gap.max((fd - jac[(s, k)]).abs());
        }
    }
    Some(gap)
}

/// `-A3p (A_check)_S^(+) A3p'`: the delivery-summed producer response
/// derivative via the Bott-Duffin constrained inverse of the reduced
/// generation problem. `None` if rows other than generation limits are held.
pub fn bott_duffin_delivery_block(p: &PlayerProblem<f64>, sol: &PlayerSolution<f64>) -> Option<DMatrix<f64>> {
    if p.kind != PlayerKind::Producer || sol.strongly_active.iter().any(|&i| !p.row_kinds[i].touches_generation()) {
        return None;
    }
    let lay = p.layout.as_ref()?;
    let pd = lay.priced_dim();
    let nw = p.dim() - pd;
    let nj = lay.n_deliveries;
    let lam = p.risk_aversion;
    let a12 = p.a_eq.columns(0, pd).into_owned();
    let ap = p.a_eq.columns(pd, nw).into_owned();
    let q = p.hessian.view((0, 0), (pd, pd)).into_owned() / lam;
    let qi = q.try_inverse()?;
    let ki = (&a12 * &qi * a12.transpose()).try_inverse()?;
    let check = ap.transpose() * ki * &ap * lam;
    let mut bs = DMatrix::zeros(sol.strongly_active.len(), nw);
    for (k, &i) in sol.strongly_active.iter().enumerate() {
        bs.set_row(k, &p.a_in.row(i).columns(pd, nw));
    }
    let id = DMatrix::<f64>::identity(nw, nw);
    let ps = if bs.nrows() == 0 { id.clone() } else { &id - bs.clone().pseudo_inverse(1e-12).ok()? * &bs };
    let inner = (&check * &ps + (&id - &ps)).pseudo_inverse(1e-12).ok()?;
    let bd = &ps * inner;
    let a3p = ap.rows(0, nj).into_owned();
    Some(-(&a3p * bd * a3p.transpose()))
}

fn dyadic(rng: &mut ChaCha8Rng, lo: i32, hi: i32) -> f64 {
    rng.gen_range(lo * 8..=hi * 8) as f64 / 8.0
}

/// Random scenario tree on `grid` with dyadic values and weights, so that
/// casting to rationals is exact. With `fair`, each power price moves from
/// the previous one on its delivery by a fixed per-slot drift plus noise
/// with zero conditional mean.
pub fn random_tree(seed: u64, grid: &TradingGrid, n_fuels: usize, fair: bool) -> PathEnsemble<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = grid.n_slots();
    let drift: Vec<f64> = (0..n).map(|_| dyadic(&mut rng, -4, 4)).collect();
    let root = PathRecord { weight: 1.0, pi: vec![0.0; n], g: vec![0.0; n * n_fuels], g_em: vec![0.0; n], nodes: None };
    let mut out = Vec::new();
    grow(&mut rng, grid, n_fuels, fair, &drift, 0, root, &mut out);
    PathEnsemble::new(out)
}

#[allow(clippy::too_many_arguments)]
fn grow(
    rng: &mut ChaCha8Rng,
    grid: &TradingGrid,
    n_fuels: usize,
    fair: bool,
    drift: &[f64],
    k: usize,
    node: PathRecord<f64>,
    out: &mut Vec<PathRecord<f64>>,
) {
    let steps = grid.slot_steps();
    if k == grid.time_steps().len() {
        out.push(node);
        return;
    }
    let probs: &[f64] = match rng.gen_range(0..4) {
        0 => &[0.5, 0.5],
        1 => &[0.25, 0.75],
        2 => &[0.25, 0.25, 0.5],
        _ => &[0.125, 0.375, 0.25, 0.25],
    };
    let slots: Vec<usize> = (0..grid.n_slots()).filter(|&s| steps[s] == k).collect();
    let first: Vec<bool> = {
        let of = grid.delivery_of_slot();
        slots.iter().map(|&s| s == grid.offset(of[s])).collect()
    };
    let mut noise = vec![vec![0.0; slots.len()]; probs.len()];
    for row in noise.iter_mut() {
        for x in row.iter_mut() {
            *x = if fair { dyadic(rng, -3, 3) } else { dyadic(rng, 20, 60) };
        }
    }
    if fair {
        for i in 0..slots.len() {
            let mean: f64 = probs.iter().zip(&noise).map(|(w, row)| w * row[i]).sum();
            for row in noise.iter_mut() {
                row[i] -= mean;
            }
        }
    }
    for (c, &w) in probs.iter().enumerate() {
        let mut child = node.clone();
        child.weight *= w;
        for (i, &s) in slots.iter().enumerate() {
            child.pi[s] = if !fair {
                noise[c][i]
            } else if first[i] {
                40.0 + noise[c][i]
            } else {
                child.pi[s - 1] + drift[s] + noise[c][i]
            };
            for l in 0..n_fuels {
                child.g[s * n_fuels + l] = dyadic(rng, 5, 15);
            }
            child.g_em[s] = dyadic(rng, 10, 30);
        }
        grow(rng, grid, n_fuels, fair, drift, k + 1, child, out);
    }
}

/// One delivery traded at two times, where everything observed at the first
/// time is independent of the rest and has small variance. Fuel and
/// emission forwards are equal at both times.
pub fn two_stage_scenario(seed: u64) -> Scenario<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
    let grid = TradingGrid::new(vec![1.0], vec![vec![0.5, 1.0]], 0.02);
    let fuels = vec![gas(), Fuel { name: "coal".into(), emission_intensity: 0.9 }];
    let np = rng.gen_range(1..=2);
    let mut capacity = 0.0;
    let producers: Vec<Producer<f64>> = (0..np)
        .map(|p| {
            let cap = rng.gen_range(8.0..15.0);
            capacity += cap;
            let fuel = if p % 2 == 0 { "gas" } else { "coal" };
            Producer {
                name: format!("producer{p}"),
                risk_aversion: rng.gen_range(0.2..1.0),
                plants: vec![plant(&format!("p{p}"), fuel, cap, rng.gen_range(1.5..2.5))],
            }
        })
        .collect();
    let nc = rng.gen_range(1..=2);
    let consumers: Vec<Consumer<f64>> =
        (0..nc).map(|c| consumer(&format!("retail{c}"), rng.gen_range(0.2..1.0), 1.0 / nc as f64)).collect();
    let gas_price = rng.gen_range(8.0..12.0);
    let coal_price = rng.gen_range(4.0..6.0);
    let em = rng.gen_range(15.0..25.0);
    // Coordinates: Pi(t1), Pi(t2), G(t1, gas), G(t1, coal), G(t2, gas), G(t2, coal), Gem(t1), Gem(t2).
    let late = random_covariance(&mut rng, &[2.0, 1.0, 1.0, 1.5]);
    let late_idx = [1, 4, 5, 7];
    let mut q = DMatrix::zeros(8, 8);
    for k in [0, 2, 3, 6] {
        q[(k, k)] = 1e-2;
    }
    for (a, &i) in late_idx.iter().enumerate() {
        for (b, &k) in late_idx.iter().enumerate() {
            q[(i, k)] = late[(a, b)];
        }
    }
    Scenario {
        schema: SCHEMA.into(),
        grid,
        fuels,
        producers,
        consumers,
        exogenous: ExogenousModel {
            demand: vec![capacity * rng.gen_range(0.3..0.6)],
            fuel_forwards: vec![gas_price, coal_price, gas_price, coal_price],
            emission_forwards: vec![em, em],
            covariance: Some(blocks(&q, 2)),
            ensemble: None,
        },
        bounds: Bounds { v_trade: 1000.0, f_trade: 1000.0, pi_max: 1000.0 },
    }
}
