use nalgebra::DMatrix;

use super::grid::TradingGrid;
use super::scenario::{CovarianceBlocks, Scenario};
use crate::error::ModelError;
use crate::linalg::sym_eigen;
use crate::process::PathEnsemble;
use crate::scalar::Scalar;

/// Eigenvalue floor targeted by the diagonal ridge.
pub const RIDGE_FLOOR: f64 = 1e-10;
/// Largest ridge accepted before the estimate is rejected.
pub const RIDGE_CAP: f64 = 1e-6;
/// Estimates with `lambda_min <= SINGULAR_REL * lambda_max` are rejected as
/// linearly dependent rather than regularized.
pub const SINGULAR_REL: f64 = 1e-12;

/// Full covariance `Q_hat` of the discounted vector `(Pi, G, G_em)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariance<S> {
    pub matrix: DMatrix<S>,
    pub n_slots: usize,
    /// Diagonal ridge that was added to reach positive definiteness.
    pub ridge: f64,
    pub min_eigenvalue: f64,
}

impl<S: Scalar> Covariance<S> {
    pub fn q1(&self) -> DMatrix<S> {
        let n = self.n_slots;
        self.matrix.view((0, 0), (n, n)).into_owned()
    }

    pub fn q2(&self) -> DMatrix<S> {
        let n = self.n_slots;
        let m = self.matrix.ncols() - n;
        self.matrix.view((0, n), (n, m)).into_owned()
    }

    pub fn q3(&self) -> DMatrix<S> {
        let n = self.n_slots;
        let m = self.matrix.ncols() - n;
        self.matrix.view((n, n), (m, m)).into_owned()
    }

    pub fn to_blocks(&self) -> CovarianceBlocks<S> {
        let rows = |m: DMatrix<S>| (0..m.nrows()).map(|i| m.row(i).iter().cloned().collect()).collect();
        CovarianceBlocks { q1: rows(self.q1()), q2: rows(self.q2()), q3: rows(self.q3()) }
    }
}

/// Discount factors for the stacked `(Pi, G, G_em)` vector.
pub fn stacked_discounts(grid: &TradingGrid, n_fuels: usize) -> Vec<f64> {
    let d = grid.slot_discounts();
    let mut out = d.clone();
    for &x in &d {
        out.extend(std::iter::repeat_n(x, n_fuels));
    }
    out.extend(d);
    out
}

/// Weighted population covariance of the discounted stacked vector, before
/// any regularization. Exact for rational inputs when the grid does not
/// discount.
pub fn weighted_covariance<S: Scalar>(ensemble: &PathEnsemble<S>, grid: &TradingGrid, n_fuels: usize) -> DMatrix<S> {
    let disc: Vec<S> = stacked_discounts(grid, n_fuels).into_iter().map(S::lit).collect();
    let dim = disc.len();
    let stacked = |p: usize| -> Vec<S> {
        let r = &ensemble.paths[p];
        r.pi.iter().chain(r.g.iter()).chain(r.g_em.iter()).zip(&disc).map(|(x, d)| x.clone() * d.clone()).collect()
    };
    let rows: Vec<Vec<S>> = (0..ensemble.len()).map(stacked).collect();
    let mut mean = vec![S::zero(); dim];
    for (p, x) in rows.iter().enumerate() {
        let w = ensemble.paths[p].weight.clone();
        for k in 0..dim {
            mean[k] += w.clone() * x[k].clone();
        }
    }
    let mut q = DMatrix::from_element(dim, dim, S::zero());
    for (p, x) in rows.iter().enumerate() {
        let w = ensemble.paths[p].weight.clone();
        let c: Vec<S> = x.iter().zip(&mean).map(|(a, m)| a.clone() - m.clone()).collect();
        for a in 0..dim {
            if c[a] == S::zero() {
                continue;
            }
            let wa = w.clone() * c[a].clone();
            for b in a..dim {
                q[(a, b)] += wa.clone() * c[b].clone();
            }
        }
    }
    for a in 0..dim {
        for b in 0..a {
            q[(a, b)] = q[(b, a)].clone();
        }
    }
    q
}

/// Applies the positive-definiteness policy: a ridge
/// `max(0, 1e-10 - lambda_min)` up to `1e-6`, rejection otherwise, and
/// rejection of numerically singular matrices.
pub fn regularize<S: Scalar>(q: DMatrix<S>, n_slots: usize) -> Result<Covariance<S>, ModelError> {
    let dim = q.nrows();
    let f = q.map(|x| x.approx_f64());
    let asym = (&f - f.transpose()).amax();
    let scale = f.amax().max(f64::MIN_POSITIVE);
    if asym > 1e-12 * scale {
        return Err(ModelError::NotPositiveDefinite(format!("matrix is not symmetric (max deviation {asym:e})")));
    }
    let eig = sym_eigen(&f).eigenvalues;
    let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(lo > SINGULAR_REL * hi) {
        return Err(ModelError::NotPositiveDefinite(format!(
            "smallest eigenvalue {lo:e} against largest {hi:e}; inputs are linearly dependent"
        )));
    }
    let ridge = (RIDGE_FLOOR - lo).max(0.0);
    if ridge > RIDGE_CAP {
        return Err(ModelError::NotPositiveDefinite(format!("ridge {ridge:e} exceeds {RIDGE_CAP:e}")));
    }
    let mut matrix = q;
    if ridge > 0.0 {
        let r = S::lit(ridge);
        for k in 0..dim {
            matrix[(k, k)] += r.clone();
        }
    }
    Ok(Covariance { matrix, n_slots, ridge, min_eigenvalue: lo + ridge })
}

/// Covariance estimate from a weighted path ensemble.
pub fn estimate_covariance<S: Scalar>(
    ensemble: &PathEnsemble<S>,
    grid: &TradingGrid,
    n_fuels: usize,
) -> Result<Covariance<S>, ModelError> {
    ensemble.check(grid, n_fuels).map_err(|e| ModelError::Invalid(format!("ensemble: {e}")))?;
    regularize(weighted_covariance(ensemble, grid, n_fuels), grid.n_slots())
}

/// Covariance from dense blocks, checked for symmetry and definiteness.
pub fn covariance_from_blocks<S: Scalar>(
    blocks: &CovarianceBlocks<S>,
    n_slots: usize,
) -> Result<Covariance<S>, ModelError> {
    let m = blocks.q3.len();
    let dim = n_slots + m;
    let mut q = DMatrix::from_element(dim, dim, S::zero());
    for i in 0..n_slots {
        for j in 0..n_slots {
            q[(i, j)] = blocks.q1[i][j].clone();
        }
        for j in 0..m {
            q[(i, n_slots + j)] = blocks.q2[i][j].clone();
            q[(n_slots + j, i)] = blocks.q2[i][j].clone();
        }
    }
    for i in 0..m {
        for j in 0..m {
            q[(n_slots + i, n_slots + j)] = blocks.q3[i][j].clone();
        }
    }
    regularize(q, n_slots)
}

/// Covariance of a scenario from whichever input it carries.
pub fn scenario_covariance<S: Scalar>(scenario: &Scenario<S>) -> Result<Covariance<S>, ModelError> {
    let n = scenario.grid.n_slots();
    match (&scenario.exogenous.covariance, &scenario.exogenous.ensemble) {
        (Some(b), _) => covariance_from_blocks(b, n),
        (None, Some(e)) => estimate_covariance(e, &scenario.grid, scenario.n_fuels()),
        (None, None) => Err(ModelError::Invalid("scenario carries neither covariance nor ensemble".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::PathRecord;
    use crate::scalar::big;
    use num_rational::BigRational;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn record<S: Scalar>(w: S, pi: S, g: S, e: S) -> PathRecord<S> {
        PathRecord { weight: w, pi: vec![pi], g: vec![g], g_em: vec![e], nodes: None }
    }

    #[test]
    fn two_point_variance_is_one() {
        let grid = TradingGrid::single(vec![1.0]);
        let half = BigRational::new(1.into(), 2.into());
        let e =
            PathEnsemble::new(vec![record(half.clone(), big(0), big(3), big(1)), record(half, big(2), big(3), big(1))]);
        let q = weighted_covariance(&e, &grid, 1);
        assert_eq!(q[(0, 0)], big(1));
        for k in 1..3 {
            assert_eq!(q[(0, k)], big(0));
            assert_eq!(q[(k, k)], big(0));
        }
    }

    #[test]
    fn linear_dependence_is_rejected() {
        let grid = TradingGrid::single(vec![1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let paths = (0..50)
            .map(|_| {
                let x: f64 = rng.gen_range(-1.0..1.0);
                record(1.0 / 50.0, x, x, rng.gen_range(-1.0..1.0))
            })
            .collect();
        let err = estimate_covariance(&PathEnsemble::new(paths), &grid, 1).unwrap_err();
        assert!(matches!(err, ModelError::NotPositiveDefinite(_)));
    }

    #[test]
    fn independent_noise_is_nearly_diagonal() {
        let grid = TradingGrid::single(vec![1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut draw = || rng.gen_range(-3f64.sqrt()..3f64.sqrt());
        let paths = (0..1000).map(|_| record(1e-3, draw(), draw(), draw())).collect();
        let c = estimate_covariance(&PathEnsemble::new(paths), &grid, 1).unwrap();
        assert_eq!(c.ridge, 0.0);
        for a in 0..3 {
            for b in 0..3 {
                if a != b {
                    assert!(c.matrix[(a, b)].abs() < 0.15);
                }
            }
            assert!((c.matrix[(a, a)] - 1.0).abs() < 0.15);
        }
    }

    #[test]
    fn blocks_round_trip() {
        let blocks = CovarianceBlocks {
            q1: vec![vec![2.0]],
            q2: vec![vec![0.5, 0.1]],
            q3: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        };
        let c = covariance_from_blocks(&blocks, 1).unwrap();
        assert_eq!(c.to_blocks(), blocks);
        let mut asym = blocks.clone();
        asym.q3[0][1] = 0.3;
        assert!(covariance_from_blocks(&asym, 1).is_err());
    }
}
