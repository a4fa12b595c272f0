use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::market::{Evaluation, Market};
use super::saturation::{saturation_of, SaturationReport};
use crate::error::EquilibriumError;
use crate::linalg::{max_eigenvalue, numerical_rank, symmetrize};
use crate::model::PlayerKind;
use crate::qp::QpOptions;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UniquenessOptions {
    /// Number of random price pairs for the monotonicity check.
    pub samples: usize,
    /// Half-width of the sampling box, relative to `1 + max |price|`.
    pub radius: f64,
    pub seed: u64,
    /// Relative tolerance for the numerical rank.
    pub rank_tol: f64,
    pub qp: QpOptions,
}

impl Default for UniquenessOptions {
    fn default() -> Self {
        Self { samples: 1000, radius: 0.05, seed: 0, rank_tol: 1e-9, qp: QpOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicitySample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// `(Z̃(x) - Z̃(y))' (x - y)`.
    pub inner: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub monotonicity_samples: Vec<MonotonicitySample>,
    /// Pairs dropped because one end lies in the saturation set.
    pub samples_skipped: usize,
    pub monotone: bool,
    /// Largest eigenvalue of the symmetrized aggregate Jacobian; `None`
    /// when the prices sit on a boundary between affine pieces.
    pub jacobian_eigen_max: Option<f64>,
    pub rank: usize,
    pub n_deliveries: usize,
    pub rank_condition: bool,
    pub strictly_feasible_plant_per_delivery: Vec<bool>,
    pub saturation: SaturationReport,
    /// Negative definite aggregate Jacobian and full delivery rank.
    pub strict_condition: bool,
}

impl DiagnosticsReport {
    pub fn unique(&self) -> bool {
        self.monotone
            && self.strict_condition
            && self.strictly_feasible_plant_per_delivery.iter().all(|&b| b)
            && !self.saturation.any_saturated()
    }
}

/// Per delivery, whether some plant has no tight generation row touching
/// its output in that delivery.
pub fn strictly_feasible_plants<T: Real>(market: &Market<T>, eval: &Evaluation<T>) -> Vec<bool> {
    let nj = market.n_deliveries();
    let mut out = vec![false; nj];
    for (p, s) in market.players.iter().zip(&eval.solutions) {
        let Some(lay) = p.layout.as_ref() else { continue };
        for (j, flag) in out.iter_mut().enumerate() {
            for r in 0..lay.n_plants() {
                let col = lay.w(j, r);
                let blocked =
                    s.active_set.iter().any(|&i| p.row_kinds[i].touches_generation() && p.a_in[(i, col)] != T::zero());
                *flag |= !blocked;
            }
        }
    }
    out
}

/// Uniqueness diagnostics around `prices`: sampled monotonicity of `Z̃`,
/// definiteness of its Jacobian, the delivery rank condition on the
/// producers' responses, and interior plants per delivery.
pub fn check_uniqueness<T: Real>(
    market: &Market<T>,
    prices: &[T],
    opts: &UniquenessOptions,
) -> Result<DiagnosticsReport, EquilibriumError> {
    let base = market.evaluate(prices, None, &opts.qp, None)?;
    let n = market.n_slots();
    let nj = market.n_deliveries();

    let jac = symmetrize(&market.jacobian(&base));
    let degenerate = base.solutions.iter().any(|s| s.on_boundary);
    let eig = max_eigenvalue(&jac);
    let scale = jac.amax().max(T::one());
    let negative_definite = eig < -T::lit(1e-12) * scale;

    let a1 = market.delivery_sums();
    let reduced = &a1 * market.producer_jacobian(&base) * a1.transpose();
    let rank = numerical_rank(&reduced, T::lit(opts.rank_tol));

    let width = T::lit(opts.radius) * (T::one() + prices.iter().fold(T::zero(), |a, p| a.max(p.abs())));
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut point = || -> Vec<T> {
        let mut x: Vec<T> = prices.iter().map(|&p| p + width * T::lit(rng.gen_range(-1.0..1.0))).collect();
        market.clamp(&mut x);
        x
    };
    let pairs: Vec<(Vec<T>, Vec<T>)> = (0..opts.samples).map(|_| (point(), point())).collect();
    let warm = base.warm_starts();
    let results: Vec<Result<Option<MonotonicitySample>, EquilibriumError>> = pairs
        .par_iter()
        .map(|(x, y)| {
            let ex = market.evaluate(x, Some(&warm), &opts.qp, None)?;
            let ey = market.evaluate(y, Some(&warm), &opts.qp, None)?;
            if saturation_of(market, &ex).any_saturated() || saturation_of(market, &ey).any_saturated() || x == y {
                return Ok(None);
            }
            let d = DVector::from_iterator(n, x.iter().zip(y).map(|(&a, &b)| a - b));
            let inner = (&ex.excess - &ey.excess).dot(&d);
            Ok(Some(MonotonicitySample {
                x: x.iter().map(|v| v.approx_f64()).collect(),
                y: y.iter().map(|v| v.approx_f64()).collect(),
                inner: inner.approx_f64(),
            }))
        })
        .collect();
    let mut samples = Vec::new();
    let mut skipped = 0;
    for r in results {
        match r? {
            Some(s) => samples.push(s),
            None => skipped += 1,
        }
    }
    let monotone = !samples.is_empty() && samples.iter().all(|s| s.inner < 0.0);
    let has_producers = market.players.iter().any(|p| p.kind == PlayerKind::Producer);

    Ok(DiagnosticsReport {
        monotonicity_samples: samples,
        samples_skipped: skipped,
        monotone,
        jacobian_eigen_max: (!degenerate).then(|| eig.approx_f64()),
        rank,
        n_deliveries: nj,
        rank_condition: has_producers && rank == nj,
        strictly_feasible_plant_per_delivery: strictly_feasible_plants(market, &base),
        saturation: saturation_of(market, &base),
        strict_condition: negative_definite && rank == nj,
    })
}
