use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::assembly::{assemble_consumer, assemble_producer, MarketData, PlayerProblem};
use super::covariance::{scenario_covariance, Covariance};
use super::scenario::Scenario;
use crate::qp::{phase_one, solve_active_set, ActiveSetOptions, Qp};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationOptions {
    /// Smallest acceptable distance to every inequality at an interior point.
    pub feas_margin: f64,
    /// Required ratio between a bound and its heuristic scale.
    pub bound_factor: f64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self { feas_margin: 1e-6, bound_factor: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub severity: Severity,
    pub detail: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed && c.severity == Severity::Error)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn check(
    name: impl Into<String>,
    passed: bool,
    severity: Severity,
    detail: impl Into<String>,
    margin: Option<f64>,
) -> Check {
    Check { name: name.into(), passed, severity, detail: detail.into(), margin }
}

/// Largest `t <= cap` such that some `x` has `A x = a` and `B x + t <= b`,
/// or `None` if no feasible `x` exists at all.
fn interior_margin(
    a: &DMatrix<f64>,
    a_rhs: &DVector<f64>,
    b: &DMatrix<f64>,
    b_rhs: &DVector<f64>,
    start: Option<&DVector<f64>>,
    cap: f64,
) -> Option<(f64, DVector<f64>)> {
    let n = a.ncols();
    let feasible = |x: &DVector<f64>| {
        (a * x - a_rhs).amax() <= 1e-9 * (1.0 + a_rhs.amax())
            && (b * x - b_rhs).iter().all(|&s| s <= 1e-9 * (1.0 + b_rhs.amax()))
    };
    let x0 = match start.filter(|x| feasible(x)) {
        Some(x) => x.clone(),
        None => phase_one(a, a_rhs, b, b_rhs, 1e-9).ok()??,
    };
    let slack0 = (b_rhs - b * &x0).iter().fold(cap, |m, &s| m.min(s));
    let dim = n + 1;
    let mut ae = DMatrix::zeros(a.nrows(), dim);
    ae.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
    let mut bi = DMatrix::zeros(b.nrows() + 1, dim);
    bi.view_mut((0, 0), (b.nrows(), n)).copy_from(b);
    for i in 0..b.nrows() {
        bi[(i, n)] = 1.0;
    }
    bi[(b.nrows(), n)] = 1.0;
    let mut bi_rhs = DVector::zeros(b.nrows() + 1);
    bi_rhs.rows_mut(0, b.nrows()).copy_from(b_rhs);
    bi_rhs[b.nrows()] = cap;
    let mut c = DVector::zeros(dim);
    c[n] = -1.0;
    let h = DMatrix::zeros(dim, dim);
    let mut z0 = DVector::zeros(dim);
    z0.rows_mut(0, n).copy_from(&x0);
    z0[n] = slack0;
    let qp = Qp { h: &h, c: &c, a: &ae, a_rhs, b: &bi, b_rhs: &bi_rhs };
    let sol = solve_active_set(&qp, &z0, &[], &ActiveSetOptions::default()).ok()?;
    Some((sol.x[n], sol.x.rows(0, n).into_owned()))
}

fn player_margin(p: &PlayerProblem<f64>) -> Option<f64> {
    interior_margin(&p.a_eq, &p.b_eq, &p.a_in, &p.b_in, Some(&p.start), 1.0).map(|(m, _)| m)
}

/// Interior clearing check on generation: find schedules with total output
/// equal to demand in every delivery while staying strictly inside ramp and
/// capacity limits, then verify that the implied positions respect the
/// trading bounds.
fn clearing_margin(scenario: &Scenario<f64>) -> Result<f64, String> {
    let grid = &scenario.grid;
    let nj = grid.n_deliveries();
    let plants: Vec<_> = scenario.producers.iter().flat_map(|p| p.plants.iter()).collect();
    let nr = plants.len();
    let dim = nj * nr;
    let w = |j: usize, r: usize| j * nr + r;
    let demand: Vec<f64> = (0..nj)
        .map(|j| scenario.consumers.iter().map(|c| c.demand_share * scenario.exogenous.demand[j]).sum())
        .collect();
    let mut a = DMatrix::zeros(nj, dim);
    for j in 0..nj {
        for r in 0..nr {
            a[(j, w(j, r))] = 1.0;
        }
    }
    let a_rhs = DVector::from_vec(demand.clone());
    let mut rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    for (r, pl) in plants.iter().enumerate() {
        for j in 0..nj.saturating_sub(1) {
            rows.push((vec![(w(j + 1, r), 1.0), (w(j, r), -1.0)], pl.ramp_up));
            rows.push((vec![(w(j + 1, r), -1.0), (w(j, r), 1.0)], -pl.ramp_down));
        }
        for j in 0..nj {
            rows.push((vec![(w(j, r), 1.0)], pl.capacity));
            rows.push((vec![(w(j, r), -1.0)], 0.0));
        }
    }
    let mut b = DMatrix::zeros(rows.len(), dim);
    let mut b_rhs = DVector::zeros(rows.len());
    for (i, (coeffs, rhs)) in rows.iter().enumerate() {
        for &(k, v) in coeffs {
            b[(i, k)] = v;
        }
        b_rhs[i] = *rhs;
    }
    let (tau, sched) = match interior_margin(&a, &a_rhs, &b, &b_rhs, None, 1.0) {
        None => {
            let cap: f64 = plants.iter().map(|p| p.capacity).sum();
            let worst = demand.iter().cloned().fold(0.0, f64::max);
            return Err(format!("no generation schedule meets demand (peak demand {worst}, total capacity {cap})"));
        }
        Some(t) => t,
    };
    // Positions implied by spreading each delivery evenly over its trading times.
    let bounds = &scenario.bounds;
    let nl = scenario.n_fuels();
    let mut pos_margin = f64::INFINITY;
    let mut emissions = 0.0;
    for j in 0..nj {
        let k = grid.trading_times[j].len() as f64;
        for c in &scenario.consumers {
            pos_margin = pos_margin.min(bounds.v_trade - c.demand_share * scenario.exogenous.demand[j] / k);
        }
        let mut r0 = 0;
        for p in &scenario.producers {
            let out = &sched.as_slice()[w(j, r0)..w(j, r0 + p.plants.len())];
            pos_margin = pos_margin.min(bounds.v_trade - out.iter().sum::<f64>() / k);
            let mut fuel = vec![0.0; nl];
            for (pl, x) in p.plants.iter().zip(out) {
                let l = scenario.fuel_index(&pl.fuel).unwrap();
                fuel[l] += pl.efficiency * x;
                emissions += scenario.fuels[l].emission_intensity * x;
            }
            for f in fuel {
                pos_margin = pos_margin.min(bounds.f_trade - f / k);
            }
            r0 += p.plants.len();
        }
    }
    pos_margin = pos_margin.min(bounds.f_trade - emissions / grid.n_slots() as f64);
    Ok(tau.min(pos_margin))
}

/// Validates a scenario: structure, covariance definiteness, strictly
/// feasible points for every player and for market clearing, and whether
/// the trading and price bounds look large enough to stay non-binding.
/// Failures are collected, never raised.
pub fn validate_scenario(scenario: &Scenario<f64>, opts: &ValidationOptions) -> ValidationReport {
    let mut checks = Vec::new();
    if let Err(e) = scenario.check_shapes() {
        checks.push(check("structure", false, Severity::Error, e.to_string(), None));
        return ValidationReport { passed: false, checks };
    }
    checks.push(check("structure", true, Severity::Error, "shapes and signs are consistent", None));

    let covariance = match scenario_covariance(scenario) {
        Ok(c) => {
            checks.push(check(
                "covariance",
                true,
                Severity::Error,
                format!("positive definite, smallest eigenvalue {:e}, ridge {:e}", c.min_eigenvalue, c.ridge),
                Some(c.min_eigenvalue),
            ));
            c
        }
        Err(e) => {
            checks.push(check("covariance", false, Severity::Error, e.to_string(), None));
            let dim = scenario.grid.n_slots() * (scenario.n_fuels() + 2);
            Covariance {
                matrix: DMatrix::identity(dim, dim),
                n_slots: scenario.grid.n_slots(),
                ridge: 0.0,
                min_eigenvalue: 1.0,
            }
        }
    };
    let d: Vec<f64> = scenario.grid.slot_discounts();
    let market = MarketData {
        covariance,
        fuel_forwards: scenario.exogenous.fuel_forwards.clone(),
        emission_forwards: scenario.exogenous.emission_forwards.clone(),
        slot_discounts: d,
    };

    let b = &scenario.bounds;
    checks.push(check(
        "bounds",
        b.v_trade > 0.0 && b.f_trade > 0.0 && b.pi_max > 0.0,
        Severity::Error,
        format!("v_trade {}, f_trade {}, pi_max {}", b.v_trade, b.f_trade, b.pi_max),
        None,
    ));
    let shares: f64 = scenario.consumers.iter().map(|c| c.demand_share).sum();
    checks.push(check(
        "demand-shares",
        (shares - 1.0).abs() <= 1e-12,
        Severity::Error,
        format!("consumer demand shares sum to {shares}"),
        None,
    ));
    if scenario.producers.is_empty() {
        checks.push(check("producers", false, Severity::Error, "market has no producers", None));
    }

    let players: Vec<PlayerProblem<f64>> = (0..scenario.producers.len())
        .map(|p| assemble_producer(scenario, &market, p))
        .chain((0..scenario.consumers.len()).map(|c| assemble_consumer(scenario, &market, c)))
        .collect();
    for p in &players {
        let name = format!("interior/{}", p.name);
        match player_margin(p) {
            None => checks.push(check(name, false, Severity::Error, "feasible set is empty", None)),
            Some(m) => checks.push(check(
                name,
                m >= opts.feas_margin,
                Severity::Error,
                if m >= opts.feas_margin {
                    format!("strictly feasible point with margin {m:e}")
                } else {
                    format!("feasible set has no interior point (margin {m:e})")
                },
                Some(m),
            )),
        }
    }

    match clearing_margin(scenario) {
        Ok(m) => checks.push(check(
            "clearing",
            m >= opts.feas_margin,
            Severity::Error,
            if m >= opts.feas_margin {
                format!("market clearing is strictly feasible with margin {m:e}")
            } else {
                format!("market clearing has no strictly feasible point (margin {m:e})")
            },
            Some(m),
        )),
        Err(e) => checks.push(check("clearing", false, Severity::Error, e.to_string(), None)),
    }

    checks.extend(bound_heuristics(scenario, &market, opts));
    let passed = checks.iter().all(|c| c.passed || c.severity == Severity::Warning);
    ValidationReport { passed, checks }
}

fn bound_heuristics(scenario: &Scenario<f64>, market: &MarketData<f64>, opts: &ValidationOptions) -> Vec<Check> {
    let cap = scenario.total_capacity();
    let peak = scenario.exogenous.demand.iter().cloned().fold(0.0, f64::max);
    let volume_scale = peak + cap;
    let max_eff = scenario.producers.iter().flat_map(|p| &p.plants).map(|r| r.efficiency).fold(0.0, f64::max);
    let max_g = scenario.fuels.iter().map(|f| f.emission_intensity).fold(0.0, f64::max);
    let fuel_scale = volume_scale * (max_eff + max_g * scenario.grid.n_deliveries() as f64);
    let disc = scenario.grid.slot_discounts();
    let nl = scenario.n_fuels();
    let fwd = scenario
        .exogenous
        .fuel_forwards
        .iter()
        .enumerate()
        .map(|(k, g)| g.abs() * disc[k / nl.max(1)])
        .fold(0.0, f64::max);
    let emi = scenario.exogenous.emission_forwards.iter().zip(&disc).map(|(g, d)| g.abs() * d).fold(0.0, f64::max);
    let lam = scenario.risk_aversions().into_iter().fold(0.0, f64::max);
    let q1 = market.covariance.q1();
    let var = (0..q1.nrows()).map(|k| q1[(k, k)]).fold(0.0, f64::max);
    let price_scale = max_eff * fwd + max_g * emi + lam * var * volume_scale;
    let f = opts.bound_factor;
    let b = &scenario.bounds;
    let item = |name: &str, bound: f64, scale: f64| {
        let ok = bound >= f * scale;
        check(
            name,
            ok,
            Severity::Warning,
            format!("bound {bound} against heuristic scale {scale:.6} (factor {f})"),
            Some(bound / scale.max(f64::MIN_POSITIVE)),
        )
    };
    vec![
        item("bounds/v_trade", b.v_trade, volume_scale),
        item("bounds/f_trade", b.f_trade, fuel_scale),
        item("bounds/pi_max", b.pi_max, price_scale),
    ]
}
