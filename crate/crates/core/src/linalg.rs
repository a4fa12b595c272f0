//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::scalar::{Real, Scalar};

/// Rank by Gaussian elimination with complete pivoting.
///
/// Exact for rational scalars; floats use a relative pivot threshold.
pub fn rank<S: Scalar>(m: &DMatrix<S>) -> usize {
    let (rows, cols) = m.shape();
    let mut a = m.clone();
    let mut scale = S::zero();
    for x in a.iter() {
        let v = x.magnitude();
        if v > scale {
            scale = v;
        }
    }
    if scale == S::zero() {
        return 0;
    }
    let mut r = 0;
    while r < rows.min(cols) {
        let mut best = (r, r);
        let mut best_val = S::zero();
        for i in r..rows {
            for j in r..cols {
                let v = a[(i, j)].magnitude();
                if v > best_val {
                    best_val = v;
                    best = (i, j);
                }
            }
        }
        if best_val == S::zero() || best_val.negligible(&scale) {
            break;
        }
        a.swap_rows(r, best.0);
        a.swap_columns(r, best.1);
        let p = a[(r, r)].clone();
        for i in (r + 1)..rows {
            if a[(i, r)] == S::zero() {
                continue;
            }
            let f = a[(i, r)].clone() / p.clone();
            for j in r..cols {
                let d = f.clone() * a[(r, j)].clone();
                a[(i, j)] -= d;
            }
        }
        r += 1;
    }
    r
}

/// Inverse by Gauss-Jordan elimination with partial pivoting; `None` if
/// the matrix is singular. Exact for rational scalars.
pub fn inverse<S: Scalar>(m: &DMatrix<S>) -> Option<DMatrix<S>> {
    let n = m.nrows();
    if m.ncols() != n {
        return None;
    }
    let mut a = m.clone();
    let mut inv = DMatrix::from_fn(n, n, |i, j| if i == j { S::one() } else { S::zero() });
    let scale = a.iter().fold(S::zero(), |acc, x| if x.magnitude() > acc { x.magnitude() } else { acc });
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[(i, c)].magnitude().partial_cmp(&a[(j, c)].magnitude()).unwrap())?;
        if a[(p, c)] == S::zero() || a[(p, c)].negligible(&scale) {
            return None;
        }
        a.swap_rows(c, p);
        inv.swap_rows(c, p);
        let d = a[(c, c)].clone();
        for j in 0..n {
            a[(c, j)] = a[(c, j)].clone() / d.clone();
            inv[(c, j)] = inv[(c, j)].clone() / d.clone();
        }
        for i in 0..n {
            if i == c || a[(i, c)] == S::zero() {
                continue;
            }
            let f = a[(i, c)].clone();
            for j in 0..n {
                let x = f.clone() * a[(c, j)].clone();
                a[(i, j)] -= x;
                let y = f.clone() * inv[(c, j)].clone();
                inv[(i, j)] -= y;
            }
        }
    }
    Some(inv)
}

/// Rank from singular values above `rel_tol * sigma_max`.
pub fn numerical_rank<T: Real>(m: &DMatrix<T>, rel_tol: T) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().singular_values();
    let top = sv.iter().fold(T::zero(), |a, &b| a.max(b));
    if top <= T::zero() {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * top).count()
}

/// Greedy selection of linearly independent rows, in their original order.
/// Returns the selected indices and an orthonormal basis of their span.
pub fn independent_rows<T: Real>(m: &DMatrix<T>, rel_tol: T) -> (Vec<usize>, Vec<DVector<T>>) {
    let mut basis: Vec<DVector<T>> = Vec::new();
    let mut keep = Vec::new();
    for i in 0..m.nrows() {
        let row: DVector<T> = m.row(i).transpose();
        let norm0 = row.norm();
        if norm0 <= T::zero() {
            continue;
        }
        let v = orthogonalize(row, &basis);
        let nv = v.norm();
        if nv > rel_tol * norm0 {
            basis.push(v / nv);
            keep.push(i);
        }
    }
    (keep, basis)
}

fn orthogonalize<T: Real>(mut v: DVector<T>, basis: &[DVector<T>]) -> DVector<T> {
    for _ in 0..2 {
        for q in basis {
            let c = q.dot(&v);
            v.axpy(-c, q, T::one());
        }
    }
    v
}

/// Orthonormal basis (as columns) of the null space of `c`, given an
/// orthonormal basis of its row space.
pub fn complement<T: Real>(n: usize, row_basis: &[DVector<T>]) -> DMatrix<T> {
    let mut basis: Vec<DVector<T>> = row_basis.to_vec();
    let start = basis.len();
    let half = T::lit(0.5);
    // Visit coordinates in order of how poorly the row space covers them.
    let mut order: Vec<(usize, T)> = (0..n)
        .map(|i| {
            let cov = row_basis.iter().fold(T::zero(), |acc, q| acc + q[i] * q[i]);
            (i, cov)
        })
        .collect();
    order.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    for (i, _) in order {
        if basis.len() == n {
            break;
        }
        let mut e = DVector::zeros(n);
        e[i] = T::one();
        let v = orthogonalize(e, &basis);
        let nv = v.norm();
        if nv > half * half {
            basis.push(v / nv);
        }
    }
    let k = basis.len() - start;
    let mut z = DMatrix::zeros(n, k);
    for (j, q) in basis[start..].iter().enumerate() {
        z.set_column(j, q);
    }
    z
}

/// Orthonormal null-space basis of `c` (columns).
pub fn nullspace<T: Real>(c: &DMatrix<T>, rel_tol: T) -> DMatrix<T> {
    let (_, basis) = independent_rows(c, rel_tol);
    complement(c.ncols(), &basis)
}

pub fn symmetrize<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::lit(0.5)
}

pub fn sym_eigen<T: Real>(m: &DMatrix<T>) -> SymmetricEigen<T, nalgebra::Dyn> {
    SymmetricEigen::new(symmetrize(m))
}

pub fn max_eigenvalue<T: Real>(m: &DMatrix<T>) -> T {
    if m.nrows() == 0 {
        return T::zero();
    }
    sym_eigen(m).eigenvalues.iter().fold(T::lit(f64::NEG_INFINITY), |a, &b| a.max(b))
}

pub fn min_eigenvalue<T: Real>(m: &DMatrix<T>) -> T {
    if m.nrows() == 0 {
        return T::zero();
    }
    sym_eigen(m).eigenvalues.iter().fold(T::lit(f64::INFINITY), |a, &b| a.min(b))
}

/// Moore-Penrose inverse of a symmetric matrix; eigenvalues at or below
/// `rel_tol * max|eig|` are treated as zero.
pub fn pinv_sym<T: Real>(m: &DMatrix<T>, rel_tol: T) -> DMatrix<T> {
    let n = m.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let eig = sym_eigen(m);
    let top = eig.eigenvalues.iter().fold(T::zero(), |a, &b| a.max(b.abs()));
    let cut = rel_tol * top;
    let mut out = DMatrix::zeros(n, n);
    for k in 0..n {
        let l = eig.eigenvalues[k];
        if l.abs() > cut && l.abs() > T::zero() {
            let u = eig.eigenvectors.column(k);
            out += (u * u.transpose()) / l;
        }
    }
    out
}

/// Moore-Penrose inverse of a general matrix via the symmetric route
/// `pinv(A) = pinv(AᵀA) Aᵀ`; adequate for the small, well-scaled systems here.
pub fn pinv<T: Real>(a: &DMatrix<T>, rel_tol: T) -> DMatrix<T> {
    pinv_sym(&(a.transpose() * a), rel_tol * rel_tol) * a.transpose()
}

/// Solves a symmetric positive definite system, falling back to the
/// pseudo-inverse when the Cholesky factorization breaks down.
pub fn solve_spd<T: Real>(m: &DMatrix<T>, rhs: &DVector<T>) -> DVector<T> {
    match m.clone().cholesky() {
        Some(ch) => ch.solve(rhs),
        None => pinv_sym(m, T::lit(1e-13)) * rhs,
    }
}

pub fn inf_norm<T: Real>(v: &DVector<T>) -> T {
    v.iter().fold(T::zero(), |a, &b| a.max(b.abs()))
}

pub fn to_f64_vec<S: Scalar>(v: &DVector<S>) -> Vec<f64> {
    v.iter().map(|x| x.approx_f64()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::big;
    use num_rational::BigRational;

    #[test]
    fn exact_inverse_of_rational_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[big(2), big(1), big(1), big(1)]);
        let inv = inverse(&m).unwrap();
        assert_eq!(&m * inv, DMatrix::from_row_slice(2, 2, &[big(1), big(0), big(0), big(1)]));
        assert!(inverse(&DMatrix::from_row_slice(2, 2, &[big(1), big(2), big(2), big(4)])).is_none());
    }

    #[test]
    fn rank_of_dependent_rows() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 1.0, 1.0]);
        assert_eq!(rank(&m), 2);
        let q: DMatrix<BigRational> = m.map(|x| big(x as i64));
        assert_eq!(rank(&q), 2);
        assert_eq!(rank(&DMatrix::<f64>::zeros(2, 3)), 0);
    }

    #[test]
    fn nullspace_is_orthonormal_and_annihilated() {
        let c = DMatrix::from_row_slice(2, 4, &[1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let z = nullspace(&c, 1e-12);
        assert_eq!(z.ncols(), 2);
        assert!((&c * &z).norm() < 1e-14);
        assert!((z.transpose() * &z - DMatrix::identity(2, 2)).norm() < 1e-14);
    }

    #[test]
    fn independent_rows_skips_duplicates() {
        let c = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 0.0, 1.0]);
        let (keep, _) = independent_rows(&c, 1e-10);
        assert_eq!(keep, vec![0, 2]);
    }

    #[test]
    fn pseudo_inverse_of_projection() {
        let p = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]);
        let pi = pinv_sym(&p, 1e-12);
        assert!((pi - &p).norm() < 1e-14);
    }
}
