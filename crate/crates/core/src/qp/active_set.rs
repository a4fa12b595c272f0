//! Primal active-set method for convex quadratic programs
//!
//! ```text
//! minimize  1/2 x' H x + c' x   subject to  A x = a,  B x <= b
//! ```
//!
//! with `H` positive semidefinite. Steps are computed in an orthonormal
//! basis of the null space of the working constraints. Directions of zero
//! curvature are followed until a constraint blocks, so linear programs
//! (`H = 0`) are handled as well. The method needs a feasible start.

use nalgebra::{DMatrix, DVector};

use crate::error::QpError;
use crate::linalg::{complement, independent_rows, inf_norm, solve_spd, sym_eigen};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy)]
pub struct Qp<'a, T: Real> {
    pub h: &'a DMatrix<T>,
    pub c: &'a DVector<T>,
    pub a: &'a DMatrix<T>,
    pub a_rhs: &'a DVector<T>,
    pub b: &'a DMatrix<T>,
    pub b_rhs: &'a DVector<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActiveSetOptions {
    pub max_iter: usize,
    /// Relative slack below which an inequality counts as tight.
    pub feas_tol: f64,
    /// Multipliers above `-dual_tol` are accepted as non-negative.
    pub dual_tol: f64,
    /// Relative threshold for linear dependence of constraint rows.
    pub rank_tol: f64,
    /// Reduced-Hessian eigenvalues below this fraction of the largest are zero.
    pub curvature_tol: f64,
}

impl Default for ActiveSetOptions {
    fn default() -> Self {
        Self { max_iter: 0, feas_tol: 1e-9, dual_tol: 1e-8, rank_tol: 1e-10, curvature_tol: 1e-12 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution<T: Real> {
    pub x: DVector<T>,
    /// Multipliers of `A x = a` (zero for rows dropped as dependent).
    pub eq_duals: DVector<T>,
    /// Multipliers of `B x <= b`, zero outside the working set.
    pub ineq_duals: DVector<T>,
    /// Working inequality rows at termination, sorted.
    pub working: Vec<usize>,
    pub iterations: usize,
}

impl<'a, T: Real> Qp<'a, T> {
    fn check(&self) -> Result<(), QpError> {
        let n = self.h.nrows();
        let ok = self.h.ncols() == n
            && self.c.len() == n
            && self.a.ncols() == n
            && self.a.nrows() == self.a_rhs.len()
            && self.b.ncols() == n
            && self.b.nrows() == self.b_rhs.len();
        if ok {
            Ok(())
        } else {
            Err(QpError::Dimension(format!("n = {n}")))
        }
    }

    pub fn objective(&self, x: &DVector<T>) -> T {
        (self.h * x).dot(x) * T::lit(0.5) + self.c.dot(x)
    }
}

fn stack_rows<T: Real>(a: &DMatrix<T>, rows_a: &[usize], b: &DMatrix<T>, rows_b: &[usize]) -> DMatrix<T> {
    let n = a.ncols();
    let mut m = DMatrix::zeros(rows_a.len() + rows_b.len(), n);
    for (k, &i) in rows_a.iter().enumerate() {
        m.set_row(k, &a.row(i));
    }
    for (k, &i) in rows_b.iter().enumerate() {
        m.set_row(rows_a.len() + k, &b.row(i));
    }
    m
}

fn rhs_of<T: Real>(a: &DVector<T>, rows_a: &[usize], b: &DVector<T>, rows_b: &[usize]) -> DVector<T> {
    DVector::from_iterator(
        rows_a.len() + rows_b.len(),
        rows_a.iter().map(|&i| a[i]).chain(rows_b.iter().map(|&i| b[i])),
    )
}

/// Moves `x` onto `C x = d` along the row space of `C` (least change).
fn project<T: Real>(x: &mut DVector<T>, c: &DMatrix<T>, d: &DVector<T>) {
    if c.nrows() == 0 {
        return;
    }
    let r = d - c * &*x;
    let y = solve_spd(&(c * c.transpose()), &r);
    *x += c.transpose() * y;
}

/// Solves the QP from a feasible `x0`. `warm` lists inequality rows to try
/// first as the working set; rows that are not tight at `x0` are ignored.
pub fn solve_active_set<T: Real>(
    qp: &Qp<T>,
    x0: &DVector<T>,
    warm: &[usize],
    opts: &ActiveSetOptions,
) -> Result<QpSolution<T>, QpError> {
    qp.check()?;
    let n = qp.h.nrows();
    let lit = T::lit;
    let feas_tol = lit(opts.feas_tol);
    let rank_tol = lit(opts.rank_tol);
    let max_iter = if opts.max_iter == 0 { 50 * (n + qp.b.nrows() + 10) } else { opts.max_iter };

    let (eq_keep, _) = independent_rows(qp.a, rank_tol);
    let mut x = x0.clone();
    let a_keep = stack_rows(qp.a, &eq_keep, qp.b, &[]);
    let a_keep_rhs = rhs_of(qp.a_rhs, &eq_keep, qp.b_rhs, &[]);
    project(&mut x, &a_keep, &a_keep_rhs);
    let eq_res = qp.a * &x - qp.a_rhs;
    for i in 0..eq_res.len() {
        if eq_res[i].abs() > feas_tol * (T::one() + qp.a_rhs[i].abs()) * lit(1e3) {
            return Err(QpError::Infeasible(format!(
                "start violates equality row {i} by {:e}",
                eq_res[i].approx_f64()
            )));
        }
    }
    let slack = |x: &DVector<T>, i: usize| qp.b_rhs[i] - qp.b.row(i).dot(&x.transpose());
    for i in 0..qp.b.nrows() {
        if slack(&x, i) < -feas_tol * (T::one() + qp.b_rhs[i].abs()) * lit(1e3) {
            return Err(QpError::Infeasible(format!("start violates inequality row {i}")));
        }
    }
    let row_norm: Vec<T> = (0..qp.b.nrows()).map(|i| qp.b.row(i).norm()).collect();

    let mut working: Vec<usize> = Vec::new();
    for &i in warm {
        if i < qp.b.nrows() && !working.contains(&i) && slack(&x, i).abs() <= feas_tol * (T::one() + qp.b_rhs[i].abs())
        {
            working.push(i);
        }
    }

    let hscale = qp.h.amax();
    let mut degenerate_run = 0usize;
    for it in 0..max_iter {
        let c_w = stack_rows(qp.a, &eq_keep, qp.b, &working);
        let (indep, basis) = independent_rows(&c_w, rank_tol);
        if indep.len() < c_w.nrows() {
            // Drop working rows that became dependent on the others.
            let ne = eq_keep.len();
            let keep_w: Vec<usize> = indep.iter().filter(|&&k| k >= ne).map(|&k| working[k - ne]).collect();
            let lost_eq = indep.iter().filter(|&&k| k < ne).count() < ne;
            if !lost_eq {
                working = keep_w;
                continue;
            }
        }
        let z = complement(n, &basis);
        let grad = qp.h * &x + qp.c;
        let gscale = T::one() + inf_norm(&grad);
        let mut moved = false;
        if z.ncols() > 0 {
            let r = z.transpose() * &grad;
            if inf_norm(&r) > lit(1e-12) * gscale {
                let m = z.transpose() * qp.h * &z;
                let eig = sym_eigen(&m);
                let top = eig.eigenvalues.iter().fold(T::zero(), |a, &b| a.max(b.abs()));
                let cut = lit(opts.curvature_tol) * top.max(hscale);
                let rho = eig.eigenvectors.transpose() * &r;
                let k = rho.len();
                let mut null_part = DVector::zeros(k);
                let mut range_step = DVector::zeros(k);
                for q in 0..k {
                    let u = eig.eigenvectors.column(q);
                    if eig.eigenvalues[q] <= cut {
                        null_part += u * rho[q];
                    } else {
                        range_step -= u * (rho[q] / eig.eigenvalues[q]);
                    }
                }
                let (p, bounded) = if inf_norm(&null_part) > lit(1e-12) * gscale {
                    (&z * (-null_part), false)
                } else {
                    (&z * range_step, true)
                };
                let pnorm = inf_norm(&p);
                if pnorm > T::zero() {
                    let mut alpha = if bounded { T::one() } else { lit(f64::INFINITY) };
                    let mut block: Option<usize> = None;
                    for i in 0..qp.b.nrows() {
                        if working.contains(&i) {
                            continue;
                        }
                        let bp = qp.b.row(i).dot(&p.transpose());
                        if bp > lit(1e-13) * row_norm[i] * pnorm {
                            let s = slack(&x, i).max(T::zero());
                            let a_i = s / bp;
                            if a_i < alpha || (a_i == alpha && block.is_some_and(|b| i < b)) {
                                alpha = a_i;
                                block = Some(i);
                            }
                        }
                    }
                    if !alpha.is_finite() {
                        return Err(QpError::Unbounded);
                    }
                    x += &p * alpha;
                    if let Some(i) = block {
                        working.push(i);
                        degenerate_run = if alpha == T::zero() { degenerate_run + 1 } else { 0 };
                    } else {
                        degenerate_run = 0;
                    }
                    moved = true;
                }
            }
        }
        if moved {
            continue;
        }

        // Stationary on the working face: check multipliers.
        let lam = multipliers(&c_w, &grad);
        let ne = eq_keep.len();
        let dual_tol = lit(opts.dual_tol) * gscale.max(T::one());
        let mut drop: Option<(usize, T)> = None;
        for (k, &i) in working.iter().enumerate() {
            let eta = lam[ne + k];
            if eta < -dual_tol {
                let better = match drop {
                    None => true,
                    Some((j, v)) => {
                        if degenerate_run > 2 * n {
                            i < working[j]
                        } else {
                            eta < v
                        }
                    }
                };
                if better {
                    drop = Some((k, eta));
                }
            }
        }
        match drop {
            Some((k, _)) => {
                working.remove(k);
            }
            None => {
                // Polish primal feasibility on the final face.
                let rhs = rhs_of(qp.a_rhs, &eq_keep, qp.b_rhs, &working);
                project(&mut x, &c_w, &rhs);
                let grad = qp.h * &x + qp.c;
                let lam = multipliers(&c_w, &grad);
                let mut eq_duals = DVector::zeros(qp.a.nrows());
                for (k, &i) in eq_keep.iter().enumerate() {
                    eq_duals[i] = lam[k];
                }
                let mut ineq_duals = DVector::zeros(qp.b.nrows());
                for (k, &i) in working.iter().enumerate() {
                    ineq_duals[i] = lam[ne + k].max(T::zero());
                }
                working.sort_unstable();
                return Ok(QpSolution { x, eq_duals, ineq_duals, working, iterations: it + 1 });
            }
        }
    }
    Err(QpError::IterationLimit(max_iter))
}

/// Least-squares multipliers of `H x + c + C' lambda = 0`.
fn multipliers<T: Real>(c: &DMatrix<T>, grad: &DVector<T>) -> DVector<T> {
    if c.nrows() == 0 {
        return DVector::zeros(0);
    }
    solve_spd(&(c * c.transpose()), &(-(c * grad)))
}

/// Finds a point with `A x = a`, `B x <= b` by minimizing the total
/// violation of an elastic reformulation. Returns `None` if the smallest
/// violation exceeds `tol`.
pub fn phase_one<T: Real>(
    a: &DMatrix<T>,
    a_rhs: &DVector<T>,
    b: &DMatrix<T>,
    b_rhs: &DVector<T>,
    tol: f64,
) -> Result<Option<DVector<T>>, QpError> {
    let n = a.ncols();
    let (me, mi) = (a.nrows(), b.nrows());
    // Variables: x (n), s+ (me), s- (me), t (1).
    let dim = n + 2 * me + 1;
    let mut ae = DMatrix::zeros(me, dim);
    for i in 0..me {
        for j in 0..n {
            ae[(i, j)] = a[(i, j)];
        }
        ae[(i, n + i)] = T::one();
        ae[(i, n + me + i)] = -T::one();
    }
    let mut bi = DMatrix::zeros(mi + 2 * me + 1, dim);
    let mut bi_rhs = DVector::zeros(mi + 2 * me + 1);
    for i in 0..mi {
        for j in 0..n {
            bi[(i, j)] = b[(i, j)];
        }
        bi[(i, dim - 1)] = -T::one();
        bi_rhs[i] = b_rhs[i];
    }
    for k in 0..2 * me {
        bi[(mi + k, n + k)] = -T::one();
    }
    bi[(mi + 2 * me, dim - 1)] = -T::one();
    let mut c = DVector::zeros(dim);
    for k in n..dim {
        c[k] = T::one();
    }
    let mut x0 = DVector::zeros(dim);
    for i in 0..me {
        let r = a_rhs[i];
        if r > T::zero() {
            x0[n + i] = r;
        } else {
            x0[n + me + i] = -r;
        }
    }
    let worst = (0..mi).fold(T::zero(), |acc, i| acc.max(-b_rhs[i]));
    x0[dim - 1] = worst;
    let h = DMatrix::zeros(dim, dim);
    let qp = Qp { h: &h, c: &c, a: &ae, a_rhs, b: &bi, b_rhs: &bi_rhs };
    let sol = solve_active_set(&qp, &x0, &[], &ActiveSetOptions::default())?;
    let violation = sol.x.rows(n, dim - n).sum();
    let scale = T::one() + inf_norm(a_rhs).max(inf_norm(b_rhs));
    if violation > T::lit(tol) * scale {
        return Ok(None);
    }
    Ok(Some(sol.x.rows(0, n).into_owned()))
}
