use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::active_set::{solve_active_set, ActiveSetOptions, Qp, QpSolution};
use crate::error::QpError;
use crate::linalg::{inf_norm, inverse, nullspace, pinv_sym, symmetrize};
use crate::model::{PlayerKind, PlayerProblem};
use crate::scalar::{Real, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QpOptions {
    /// Multipliers at or below this are treated as zero.
    pub dual_tol: f64,
    /// Target for the largest KKT residual.
    pub kkt_tol: f64,
    pub max_iter: usize,
    /// Pick the minimum-norm generation schedule among optimal ones.
    pub tie_break: bool,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self { dual_tol: 1e-8, kkt_tol: 1e-9, max_iter: 0, tie_break: true }
    }
}

impl QpOptions {
    fn active_set(&self) -> ActiveSetOptions {
        ActiveSetOptions { max_iter: self.max_iter, dual_tol: self.dual_tol, ..ActiveSetOptions::default() }
    }
}

/// Primal point and working set of a previous solve, reused as a start.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart<T: Real> {
    pub x: DVector<T>,
    pub working: Vec<usize>,
}

/// Raw (unscaled) KKT residuals.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ResidualReport {
    pub stationarity: f64,
    pub primal_equality: f64,
    pub primal_inequality: f64,
    pub dual_sign: f64,
    pub complementarity: f64,
}

impl ResidualReport {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal_equality)
            .max(self.primal_inequality)
            .max(self.dual_sign)
            .max(self.complementarity)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlayerSolution<T: Real> {
    pub v: DVector<T>,
    pub eq_duals: DVector<T>,
    pub ineq_duals: DVector<T>,
    /// Inequality rows that are tight at `v`.
    pub active_set: Vec<usize>,
    /// Working rows with a multiplier above `dual_tol`.
    pub strongly_active: Vec<usize>,
    pub utility: T,
    pub residuals: ResidualReport,
    /// True if some tight row carries a multiplier at or below `dual_tol`,
    /// i.e. the prices sit on a boundary between affine pieces.
    pub on_boundary: bool,
    pub warm: WarmStart<T>,
    pub iterations: usize,
}

impl<T: Real> PlayerSolution<T> {
    pub fn volumes(&self, n_slots: usize) -> DVector<T> {
        self.v.rows(0, n_slots).into_owned()
    }
}

/// KKT residuals of `(v, mu, eta)` for the player's problem at `prices`.
pub fn kkt_residual<T: Real>(
    problem: &PlayerProblem<T>,
    prices: &[T],
    v: &DVector<T>,
    eq_duals: &DVector<T>,
    ineq_duals: &DVector<T>,
) -> ResidualReport {
    let lin = problem.linear(prices);
    let stat = &problem.hessian * v + lin + problem.a_eq.transpose() * eq_duals + problem.a_in.transpose() * ineq_duals;
    let eq = &problem.a_eq * v - &problem.b_eq;
    let slack = &problem.a_in * v - &problem.b_in;
    let f = |x: T| x.approx_f64();
    ResidualReport {
        stationarity: f(inf_norm(&stat)),
        primal_equality: f(inf_norm(&eq)),
        primal_inequality: f(slack.iter().fold(T::zero(), |a, &b| a.max(b))),
        dual_sign: f(ineq_duals.iter().fold(T::zero(), |a, &b| a.max(-b))),
        complementarity: f(slack.iter().zip(ineq_duals.iter()).fold(T::zero(), |a, (&s, &e)| a.max((s * e).abs()))),
    }
}

fn tight_rows<T: Real>(problem: &PlayerProblem<T>, v: &DVector<T>, tol: f64) -> Vec<usize> {
    let slack = &problem.b_in - &problem.a_in * v;
    (0..slack.len()).filter(|&i| slack[i].abs() <= T::lit(tol) * (T::one() + problem.b_in[i].abs())).collect()
}

/// Among optimal producer points sharing `(V, F, O)`, picks the generation
/// schedule of least Euclidean norm.
fn min_norm_generation<T: Real>(
    problem: &PlayerProblem<T>,
    v: &DVector<T>,
    opts: &QpOptions,
) -> Result<DVector<T>, QpError> {
    let pd = problem.layout.as_ref().map(|l| l.priced_dim()).unwrap_or(problem.dim());
    let nw = problem.dim() - pd;
    if nw == 0 {
        return Ok(v.clone());
    }
    let fixed = v.rows(0, pd).into_owned();
    let w0 = v.rows(pd, nw).into_owned();
    let a_w = problem.a_eq.columns(pd, nw).into_owned();
    let a_rhs = &problem.b_eq - problem.a_eq.columns(0, pd) * &fixed;
    let rows: Vec<usize> = (0..problem.a_in.nrows()).filter(|&i| problem.row_kinds[i].touches_generation()).collect();
    let mut b_w = DMatrix::zeros(rows.len(), nw);
    let mut b_rhs = DVector::zeros(rows.len());
    for (k, &i) in rows.iter().enumerate() {
        b_w.set_row(k, &problem.a_in.row(i).columns(pd, nw));
        b_rhs[k] = problem.b_in[i];
    }
    let h = DMatrix::identity(nw, nw);
    let c = DVector::zeros(nw);
    let qp = Qp { h: &h, c: &c, a: &a_w, a_rhs: &a_rhs, b: &b_w, b_rhs: &b_rhs };
    let sol = solve_active_set(&qp, &w0, &[], &opts.active_set())?;
    let mut out = v.clone();
    out.rows_mut(pd, nw).copy_from(&sol.x);
    Ok(out)
}

/// Solves a player's problem at the given discounted prices.
pub fn solve_qp<T: Real>(
    problem: &PlayerProblem<T>,
    prices: &[T],
    warm: Option<&WarmStart<T>>,
    opts: &QpOptions,
) -> Result<PlayerSolution<T>, QpError> {
    if prices.len() != problem.n_slots {
        return Err(QpError::Dimension(format!("{} prices for {} slots", prices.len(), problem.n_slots)));
    }
    let lin = problem.linear(prices);
    let qp = Qp {
        h: &problem.hessian,
        c: &lin,
        a: &problem.a_eq,
        a_rhs: &problem.b_eq,
        b: &problem.a_in,
        b_rhs: &problem.b_in,
    };
    let (x0, ws): (&DVector<T>, &[usize]) = match warm {
        Some(w) if w.x.len() == problem.dim() => (&w.x, &w.working),
        _ => (&problem.start, &[]),
    };
    let sol: QpSolution<T> = solve_active_set(&qp, x0, ws, &opts.active_set())?;
    let warm = WarmStart { x: sol.x.clone(), working: sol.working.clone() };
    let dual_tol = T::lit(opts.dual_tol);
    let strongly_active: Vec<usize> = sol.working.iter().copied().filter(|&i| sol.ineq_duals[i] > dual_tol).collect();

    let v = if opts.tie_break && problem.kind == PlayerKind::Producer {
        min_norm_generation(problem, &sol.x, opts)?
    } else {
        sol.x.clone()
    };
    let active_set = tight_rows(problem, &v, 1e-9);
    let on_boundary = active_set.iter().any(|&i| sol.ineq_duals[i] <= dual_tol);
    let residuals = kkt_residual(problem, prices, &v, &sol.eq_duals, &sol.ineq_duals);
    let utility = problem.utility(&v, prices);
    Ok(PlayerSolution {
        v,
        eq_duals: sol.eq_duals,
        ineq_duals: sol.ineq_duals,
        active_set,
        strongly_active,
        utility,
        residuals,
        on_boundary,
        warm,
        iterations: sol.iterations,
    })
}

/// Electricity positions `V` of the player's best response.
pub fn best_response_volumes<T: Real>(
    problem: &PlayerProblem<T>,
    prices: &[T],
    opts: &QpOptions,
) -> Result<DVector<T>, QpError> {
    Ok(solve_qp(problem, prices, None, opts)?.volumes(problem.n_slots))
}

/// Derivative of `V` with respect to the discounted prices on the affine
/// piece selected by a solution.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseJacobian<T: Real> {
    pub matrix: DMatrix<T>,
    /// Inequality rows held active.
    pub selection: Vec<usize>,
    pub on_boundary: bool,
}

/// Holds the equality rows and the strongly active inequalities fixed and
/// differentiates the resulting equality-constrained problem:
/// `dV/dprice = -E' Z (Z' H Z)^+ Z' E` with `Z` spanning the null space
/// of the held rows and `E` selecting the electricity block.
pub fn response_jacobian<T: Real>(problem: &PlayerProblem<T>, solution: &PlayerSolution<T>) -> ResponseJacobian<T> {
    let n = problem.n_slots;
    let dim = problem.dim();
    let rows = &solution.strongly_active;
    let mut c = DMatrix::zeros(problem.a_eq.nrows() + rows.len(), dim);
    for i in 0..problem.a_eq.nrows() {
        c.set_row(i, &problem.a_eq.row(i));
    }
    for (k, &i) in rows.iter().enumerate() {
        c.set_row(problem.a_eq.nrows() + k, &problem.a_in.row(i));
    }
    let z = nullspace(&c, T::lit(1e-10));
    let matrix = if z.ncols() == 0 {
        DMatrix::zeros(n, n)
    } else {
        let m = z.transpose() * &problem.hessian * &z;
        let zv = z.rows(0, n).into_owned();
        -symmetrize(&(&zv * pinv_sym(&m, T::lit(1e-12)) * zv.transpose()))
    };
    ResponseJacobian { matrix, selection: rows.clone(), on_boundary: solution.on_boundary }
}

/// Closed-form consumer response derivative
/// `-(1/lambda) Q^-1 + (1/lambda) Q^-1 A' (A Q^-1 A')^-1 A Q^-1`
/// for `Q = Q_hat_1` and `A` the delivery-sum matrix. Exact for rationals.
pub fn consumer_projection_jacobian<S: Scalar>(q1: &DMatrix<S>, risk_aversion: S, a1: &DMatrix<S>) -> DMatrix<S> {
    let qi = inverse(q1).expect("Q1 is positive definite");
    let k = inverse(&(a1 * &qi * a1.transpose())).expect("A1 has full row rank");
    let m = &qi * a1.transpose() * k * a1 * &qi - &qi;
    m.map(|x| x / risk_aversion.clone())
}
