use equiterm::equilibrium::{
    check_uniqueness, detect_saturation, solve_equilibrium, BoundContacts, EquilibriumOptions, SaturationReport,
    TraceEntry, UniquenessOptions,
};
use equiterm::model::{validate_scenario, PlayerKind, ValidationOptions};
use equiterm::oracles::{brute_force_equilibrium, mean_max_equilibrium, two_stage_from_equilibrium, GridSpec};
use equiterm::process::{doob_decompose, shift_measure, verify_covariance_invariance, PathEnsemble};
use equiterm::qp::ResidualReport;
use equiterm::{EquilibriumResult64, Market64, OracleError, Scenario64};
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{Command, DoobArgs, SolveArgs};
use crate::report::{EXIT_INVALID, EXIT_NOT_CONVERGED, EXIT_OK, EXIT_USAGE};

pub struct Outcome {
    pub code: i32,
    pub message: Option<String>,
    pub result: Value,
}

impl Outcome {
    fn new(code: i32, result: impl Serialize) -> Self {
        Self { code, message: None, result: to_value(result) }
    }

    fn fail(code: i32, message: impl ToString, result: Value) -> Self {
        Self { code, message: Some(message.to_string()), result }
    }
}

fn to_value(x: impl Serialize) -> Value {
    serde_json::to_value(x).expect("report value serializes")
}

pub fn equilibrium_options(a: &SolveArgs) -> EquilibriumOptions {
    EquilibriumOptions {
        method: a.method.into(),
        tol: a.tol,
        kkt_tol: a.kkt_tol,
        max_iter: a.max_iter,
        ..EquilibriumOptions::default()
    }
}

/// Everything that steers the run, so a report can be reproduced from it.
pub fn config(cmd: &Command) -> Value {
    let mut c = json!({ "validation": ValidationOptions::default() });
    let solve = match cmd {
        Command::Solve(a) | Command::TwoStage(a) => Some(a),
        Command::Diagnose(d) => Some(&d.solve),
        Command::Oracle(o) => Some(&o.solve),
        Command::Doob(d) => Some(&d.solve),
        Command::Validate(_) | Command::MeanMax(_) => None,
    };
    if let Some(a) = solve {
        c["equilibrium"] = to_value(equilibrium_options(a));
    }
    match cmd {
        Command::Diagnose(d) => {
            c["uniqueness"] = to_value(uniqueness_options(d.seed, d.samples, d.radius));
        }
        Command::Oracle(o) => {
            c["grid"] = to_value(GridSpec { step: o.step, ..GridSpec::default() });
        }
        Command::Doob(d) => {
            c["doob"] = json!({
                "ensemble": d.ensemble.as_ref().map(|p| p.display().to_string()),
                "normalize": d.normalize,
                "equilibrium": d.equilibrium,
            });
        }
        _ => {}
    }
    c
}

fn uniqueness_options(seed: u64, samples: usize, radius: f64) -> UniquenessOptions {
    UniquenessOptions { seed, samples, radius, ..UniquenessOptions::default() }
}

pub fn run(cmd: &Command, scenario: &Scenario64) -> Outcome {
    let validation = validate_scenario(scenario, &ValidationOptions::default());
    if let Command::Validate(_) = cmd {
        let code = if validation.passed { EXIT_OK } else { EXIT_INVALID };
        return Outcome::new(code, validation);
    }
    if !validation.passed {
        let first = validation.failures().next().map(|c| format!("{}: {}", c.name, c.detail));
        return Outcome::fail(EXIT_INVALID, first.unwrap_or_default(), json!({ "validation": validation }));
    }
    match cmd {
        Command::Validate(_) => unreachable!(),
        Command::Solve(a) => solve(scenario, a),
        Command::Diagnose(d) => diagnose(scenario, &d.solve, uniqueness_options(d.seed, d.samples, d.radius)),
        Command::TwoStage(a) => two_stage(scenario, a),
        Command::MeanMax(_) => mean_max(scenario),
        Command::Oracle(o) => oracle(scenario, &o.solve, o.step),
        Command::Doob(d) => doob(scenario, d),
    }
}

#[derive(Serialize)]
struct PlayerOutput {
    name: String,
    kind: &'static str,
    volumes: Vec<f64>,
    utility: f64,
    kkt: ResidualReport,
}

#[derive(Serialize)]
struct SolveOutput {
    status: equiterm::equilibrium::Status,
    method: equiterm::equilibrium::Method,
    iterations: usize,
    newton_steps: usize,
    evaluations: usize,
    clearing_residual: f64,
    kkt_residual: f64,
    market_objective: f64,
    prices: Vec<f64>,
    undiscounted_prices: Vec<f64>,
    excess: Vec<f64>,
    bound_contacts: BoundContacts,
    players: Vec<PlayerOutput>,
    #[serde(skip_serializing_if = "Option::is_none")]
    saturation: Option<SaturationReport>,
    trace: Vec<TraceEntry>,
}

fn solve_output(market: &Market64, res: &EquilibriumResult64, saturation: Option<SaturationReport>) -> SolveOutput {
    let n = market.n_slots();
    let players = market
        .players
        .iter()
        .zip(&res.player_solutions)
        .map(|(p, s)| PlayerOutput {
            name: p.name.clone(),
            kind: match p.kind {
                PlayerKind::Producer => "producer",
                PlayerKind::Consumer => "consumer",
            },
            volumes: s.volumes(n).iter().copied().collect(),
            utility: s.utility,
            kkt: s.residuals,
        })
        .collect();
    SolveOutput {
        status: res.status,
        method: res.method,
        iterations: res.iterations,
        newton_steps: res.newton_steps,
        evaluations: res.evaluations,
        clearing_residual: res.clearing_residual,
        kkt_residual: res.kkt_residual,
        market_objective: res.market_objective,
        prices: res.prices.clone(),
        undiscounted_prices: res.undiscounted_prices.clone(),
        excess: res.excess.clone(),
        bound_contacts: res.bound_contacts,
        players,
        saturation,
        trace: res.trace.clone(),
    }
}

/// Builds the market and solves; `Err` carries the finished outcome.
fn equilibrium(scenario: &Scenario64, a: &SolveArgs) -> Result<(Market64, EquilibriumResult64), Outcome> {
    let market = Market64::new(scenario).map_err(|e| Outcome::fail(EXIT_INVALID, e, Value::Null))?;
    let res = solve_equilibrium(&market, &equilibrium_options(a))
        .map_err(|e| Outcome::fail(EXIT_NOT_CONVERGED, e, Value::Null))?;
    Ok((market, res))
}

fn not_converged(res: &EquilibriumResult64) -> String {
    format!("equilibrium search ended with status {:?} after {} iterations", res.status, res.iterations)
}

fn solve(scenario: &Scenario64, a: &SolveArgs) -> Outcome {
    let (market, res) = match equilibrium(scenario, a) {
        Ok(x) => x,
        Err(o) => return o,
    };
    let saturation = match detect_saturation(&market, &res.prices, &equilibrium_options(a).qp) {
        Ok(s) => Some(s),
        Err(e) => return Outcome::fail(EXIT_NOT_CONVERGED, e, to_value(solve_output(&market, &res, None))),
    };
    let out = solve_output(&market, &res, saturation);
    if res.converged() {
        Outcome::new(EXIT_OK, out)
    } else {
        Outcome::fail(EXIT_NOT_CONVERGED, not_converged(&res), to_value(out))
    }
}

fn diagnose(scenario: &Scenario64, a: &SolveArgs, opts: UniquenessOptions) -> Outcome {
    let (market, res) = match equilibrium(scenario, a) {
        Ok(x) => x,
        Err(o) => return o,
    };
    let eq = solve_output(&market, &res, None);
    if !res.converged() {
        return Outcome::fail(EXIT_NOT_CONVERGED, not_converged(&res), json!({ "equilibrium": eq }));
    }
    match check_uniqueness(&market, &res.prices, &opts) {
        Ok(rep) => {
            let unique = rep.unique();
            Outcome::new(EXIT_OK, json!({ "equilibrium": eq, "diagnostics": rep, "unique": unique }))
        }
        Err(e) => Outcome::fail(EXIT_NOT_CONVERGED, e, json!({ "equilibrium": eq })),
    }
}

fn oracle_code(e: &OracleError) -> i32 {
    match e {
        OracleError::Precondition(_) => EXIT_INVALID,
        _ => EXIT_NOT_CONVERGED,
    }
}

fn two_stage(scenario: &Scenario64, a: &SolveArgs) -> Outcome {
    let (market, res) = match equilibrium(scenario, a) {
        Ok(x) => x,
        Err(o) => return o,
    };
    let eq = solve_output(&market, &res, None);
    if !res.converged() {
        return Outcome::fail(EXIT_NOT_CONVERGED, not_converged(&res), json!({ "equilibrium": eq }));
    }
    match two_stage_from_equilibrium(&market, &res) {
        Ok(cmp) => Outcome::new(EXIT_OK, json!({ "equilibrium": eq, "two_stage": cmp })),
        Err(e) => Outcome::fail(oracle_code(&e), e, json!({ "equilibrium": eq })),
    }
}

fn mean_max(scenario: &Scenario64) -> Outcome {
    match mean_max_equilibrium(scenario) {
        Ok(r) => Outcome::new(EXIT_OK, r),
        Err(e) => Outcome::fail(oracle_code(&e), e, Value::Null),
    }
}

fn oracle(scenario: &Scenario64, a: &SolveArgs, step: f64) -> Outcome {
    let (market, res) = match equilibrium(scenario, a) {
        Ok(x) => x,
        Err(o) => return o,
    };
    let spec = GridSpec { step, ..GridSpec::default() };
    let bf = match brute_force_equilibrium(&market, &spec) {
        Ok(bf) => bf,
        Err(e) => return Outcome::fail(oracle_code(&e), e, Value::Null),
    };
    let gap = bf.prices.iter().zip(&res.prices).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let result = json!({
        "oracle": bf,
        "solver_prices": res.prices,
        "solver_status": res.status,
        "max_gap": gap,
        "within_step": gap <= step,
    });
    if res.converged() {
        Outcome::new(EXIT_OK, result)
    } else {
        Outcome::fail(EXIT_NOT_CONVERGED, not_converged(&res), result)
    }
}

fn doob(scenario: &Scenario64, d: &DoobArgs) -> Outcome {
    let ensemble: PathEnsemble<f64> = match &d.ensemble {
        Some(path) => {
            let text = match std::fs::read_to_string(path) {
                Ok(t) => t,
                Err(e) => return Outcome::fail(EXIT_USAGE, format!("{}: {e}", path.display()), Value::Null),
            };
            match serde_json::from_str(&text) {
                Ok(e) => e,
                Err(e) => return Outcome::fail(EXIT_INVALID, format!("{}: {e}", path.display()), Value::Null),
            }
        }
        None => match &scenario.exogenous.ensemble {
            Some(e) => e.clone(),
            None => return Outcome::fail(EXIT_INVALID, "scenario has no ensemble and none was given", Value::Null),
        },
    };
    let grid = &scenario.grid;
    let nl = scenario.n_fuels();
    let parts = match doob_decompose(&ensemble, grid, nl, d.normalize) {
        Ok(p) => p,
        Err(e) => return Outcome::fail(EXIT_INVALID, e, Value::Null),
    };
    let check = match parts.check(&ensemble, grid, nl) {
        Ok(c) => c,
        Err(e) => return Outcome::fail(EXIT_INVALID, e, Value::Null),
    };
    let mut result = json!({
        "normalized": parts.normalized,
        "check": check,
        "martingale": parts.martingale,
        "predictable": parts.predictable,
    });
    if !d.equilibrium {
        return Outcome::new(EXIT_OK, result);
    }
    let (market, res) = match equilibrium(scenario, &d.solve) {
        Ok(x) => x,
        Err(o) => return o,
    };
    if !res.converged() {
        return Outcome::fail(EXIT_NOT_CONVERGED, not_converged(&res), result);
    }
    let raw = match doob_decompose(&ensemble, grid, nl, false) {
        Ok(p) => p,
        Err(e) => return Outcome::fail(EXIT_INVALID, e, result),
    };
    let drift = raw.drift_to(&ensemble, &res.undiscounted_prices);
    let shifted = match shift_measure(&ensemble, grid, nl, &drift) {
        Ok(s) => s,
        Err(e) => return Outcome::fail(EXIT_INVALID, e, result),
    };
    let invariance = match verify_covariance_invariance(&ensemble, &shifted, grid, nl) {
        Ok(r) => r,
        Err(e) => return Outcome::fail(EXIT_INVALID, e, result),
    };
    let mut shift = json!({
        "prices": res.prices,
        "undiscounted_prices": res.undiscounted_prices,
        "covariance": invariance,
    });
    // The re-solve only means something when the scenario's covariance is
    // estimated from this very ensemble.
    if d.ensemble.is_none() && scenario.exogenous.covariance.is_none() {
        let mut moved = scenario.clone();
        moved.exogenous.ensemble = Some(shifted);
        let opts = EquilibriumOptions { initial_prices: Some(res.prices.clone()), ..equilibrium_options(&d.solve) };
        match Market64::new(&moved)
            .map_err(|e| e.to_string())
            .and_then(|m| solve_equilibrium(&m, &opts).map_err(|e| e.to_string()))
        {
            Ok(again) => {
                let change = again.prices.iter().zip(&res.prices).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                shift["resolve"] = json!({
                    "status": again.status,
                    "iterations": again.iterations,
                    "newton_steps": again.newton_steps,
                    "max_price_change": change,
                });
            }
            Err(e) => return Outcome::fail(EXIT_NOT_CONVERGED, e, result),
        }
    }
    let _ = market;
    result["equilibrium_shift"] = shift;
    Outcome::new(EXIT_OK, result)
}
