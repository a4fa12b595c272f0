use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::Market;
use crate::error::OracleError;
use crate::qp::QpOptions;

/// Resolution of the grid scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Spacing of the final lattice.
    pub step: f64,
    /// Half-width, in cells of the previous level, of each refined window.
    pub window: usize,
    /// Points per dimension on every level; defaults to 41, 21 or 11 for
    /// one, two or three prices.
    pub points: Option<usize>,
    pub qp: QpOptions,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { step: 1e-4, window: 3, points: None, qp: QpOptions::default() }
    }
}

/// How the final lattice point was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LatticeSelection {
    /// Root of an affine least-squares fit to the sampled excess, rounded
    /// to the lattice.
    AffineFit,
    /// Lattice point with the smallest `||Z||_inf`.
    ExcessNorm,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BruteForceResult {
    /// Discounted prices of the selected lattice point.
    pub prices: Vec<f64>,
    pub excess_inf: f64,
    pub step: f64,
    pub levels: usize,
    pub evaluations: usize,
    pub selection: LatticeSelection,
    /// Largest deviation of the sampled excess from the affine fit.
    pub fit_residual: Option<f64>,
}

pub const MAX_PRICES: usize = 3;

/// Grid search for the equilibrium over `[-pi_max, pi_max]^N`. The first
/// level covers the whole box; each next level scans a window of `window`
/// cells around the previous best point until the cells are no coarser than
/// `step`, and a last pass samples the lattice of multiples of `step`
/// around that point.
///
/// Levels rank points by the summed optimal utilities, a convex function of
/// the prices whose gradient is `-Z`: unlike the excess norm it keeps
/// decreasing towards the equilibrium where every player sits at a limit.
/// On the final lattice the excess is affine unless an active set changes
/// inside the window; its sampled values are fitted by least squares and
/// the fitted root is rounded to the lattice. The smallest `||Z||_inf` is
/// only used when the fit is not affine or its root leaves the window, as
/// on an ill-conditioned map that norm is flat along the weak direction.
pub fn brute_force_equilibrium(market: &Market<f64>, spec: &GridSpec) -> Result<BruteForceResult, OracleError> {
    let n = market.n_slots();
    if n == 0 || n > MAX_PRICES {
        return Err(OracleError::Precondition(format!("grid scan supports 1 to {MAX_PRICES} prices, got {n}")));
    }
    if !(spec.step > 0.0) || spec.window == 0 {
        return Err(OracleError::Precondition("step and window must be positive".into()));
    }
    let m = spec.points.unwrap_or([41, 21, 11][n - 1]).max(3);
    let pi_max = market.pi_max;
    let mut center = vec![0.0; n];
    let mut half = pi_max;
    let mut levels = 0;
    let mut evaluations = 0;
    loop {
        let cell = 2.0 * half / (m - 1) as f64;
        let axis = |c: f64| -> Vec<f64> {
            (0..m).map(|k| (c + (k as f64 - (m - 1) as f64 / 2.0) * cell).clamp(-pi_max, pi_max)).collect()
        };
        let axes: Vec<Vec<f64>> = center.iter().map(|&c| axis(c)).collect();
        let samples = scan(market, &axes, &spec.qp)?;
        evaluations += samples.len();
        center = first_min(&samples, |s| s.value).point.clone();
        levels += 1;
        if cell <= spec.step {
            break;
        }
        half = spec.window as f64 * cell;
    }
    let w = spec.window as i64;
    let base: Vec<f64> = center.iter().map(|&c| (c / spec.step).round()).collect();
    let axes: Vec<Vec<f64>> =
        base.iter().map(|&b| (-w..=w).map(|k| ((b + k as f64) * spec.step).clamp(-pi_max, pi_max)).collect()).collect();
    let samples = scan(market, &axes, &spec.qp)?;
    evaluations += samples.len();
    levels += 1;

    let fit = affine_root(&samples, &center, spec.step);
    let fit_residual = fit.as_ref().map(|f| f.1);
    let inside = |x: &[f64]| x.iter().zip(&base).all(|(v, b)| (v / spec.step - b).abs() <= w as f64);
    let (prices, excess_inf, selection) = match fit {
        Some((root, _)) if inside(&root) => {
            let x: Vec<f64> = root.iter().map(|v| (v / spec.step).round() * spec.step).collect();
            let ex = match samples.iter().find(|s| s.point == x) {
                Some(s) => s.excess_inf,
                None => market.evaluate(&x, None, &spec.qp, None)?.residual(),
            };
            (x, ex, LatticeSelection::AffineFit)
        }
        _ => {
            let best = first_min(&samples, |s| s.excess_inf);
            (best.point.clone(), best.excess_inf, LatticeSelection::ExcessNorm)
        }
    };
    Ok(BruteForceResult { prices, excess_inf, step: spec.step, levels, evaluations, selection, fit_residual })
}

struct Sample {
    point: Vec<f64>,
    value: f64,
    excess: DVector<f64>,
    excess_inf: f64,
}

/// First sample with the smallest key, so ties go to the lexicographically
/// first point.
fn first_min(samples: &[Sample], key: impl Fn(&Sample) -> f64) -> &Sample {
    samples.iter().fold(&samples[0], |best, s| if key(s) < key(best) { s } else { best })
}

/// Least-squares fit `Z(x) ~ z0 + G (x - x0) / step` over the samples.
/// Returns the fitted root and the largest fit deviation, or `None` when
/// the samples are not affine to within `1e-7` relative or `G` is singular.
fn affine_root(samples: &[Sample], x0: &[f64], step: f64) -> Option<(Vec<f64>, f64)> {
    let n = x0.len();
    let design =
        DMatrix::from_fn(
            samples.len(),
            n + 1,
            |r, c| {
                if c == 0 {
                    1.0
                } else {
                    (samples[r].point[c - 1] - x0[c - 1]) / step
                }
            },
        );
    let targets = DMatrix::from_fn(samples.len(), n, |r, c| samples[r].excess[c]);
    let coef = design.clone().svd(true, true).solve(&targets, 1e-12).ok()?;
    let fitted = &design * &coef;
    let deviation = (&fitted - &targets).amax();
    let scale = targets.amax().max(1e-12);
    if deviation > 1e-7 * scale + 1e-10 {
        return None;
    }
    let z0 = coef.row(0).transpose();
    let g = coef.rows(1, n).transpose();
    let d = g.lu().solve(&(-z0))?;
    Some((x0.iter().zip(d.iter()).map(|(x, d)| x + d * step).collect(), deviation))
}

/// Evaluates every point of the tensor grid, in lexicographic order.
fn scan(market: &Market<f64>, axes: &[Vec<f64>], qp: &QpOptions) -> Result<Vec<Sample>, OracleError> {
    let total: usize = axes.iter().map(Vec::len).product();
    let point = |mut k: usize| -> Vec<f64> {
        let mut x = vec![0.0; axes.len()];
        for d in (0..axes.len()).rev() {
            x[d] = axes[d][k % axes[d].len()];
            k /= axes[d].len();
        }
        x
    };
    (0..total)
        .into_par_iter()
        .map(|k| {
            let x = point(k);
            let eval = market.evaluate(&x, None, qp, None)?;
            Ok(Sample { value: eval.value(), excess_inf: eval.residual(), excess: eval.excess.clone(), point: x })
        })
        .collect()
}
