use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::ProcessError;
use crate::model::TradingGrid;
use crate::scalar::Scalar;

/// One weighted scenario path. Values are undiscounted and laid out in the
/// canonical slot order: `pi` and `g_em` have one entry per slot, `g` has
/// one entry per `(slot, fuel)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub struct PathRecord<S> {
    pub weight: S,
    pub pi: Vec<S>,
    #[serde(default)]
    pub g: Vec<S>,
    #[serde(default)]
    pub g_em: Vec<S>,
    /// Optional information-set id per time step. When absent on every
    /// path, the natural filtration of the observed values is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub struct PathEnsemble<S> {
    pub paths: Vec<PathRecord<S>>,
}

/// Information sets per time step: `node[p][k]` is a dense id of the node
/// path `p` sits in at step `k`. Ids at a step run from zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Filtration {
    pub node: Vec<Vec<usize>>,
    pub counts: Vec<usize>,
}

impl Filtration {
    pub fn steps(&self) -> usize {
        self.counts.len()
    }

    /// Node of path `p` immediately before step `k`; `None` means the root.
    pub fn parent(&self, p: usize, k: usize) -> Option<usize> {
        if k == 0 {
            None
        } else {
            Some(self.node[p][k - 1])
        }
    }
}

impl<S: Scalar> PathEnsemble<S> {
    pub fn new(paths: Vec<PathRecord<S>>) -> Self {
        Self { paths }
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn cast<T: Scalar>(&self) -> PathEnsemble<T> {
        let conv = |v: &Vec<S>| v.iter().map(|x| T::lit(x.approx_f64())).collect();
        PathEnsemble {
            paths: self
                .paths
                .iter()
                .map(|p| PathRecord {
                    weight: T::lit(p.weight.approx_f64()),
                    pi: conv(&p.pi),
                    g: conv(&p.g),
                    g_em: conv(&p.g_em),
                    nodes: p.nodes.clone(),
                })
                .collect(),
        }
    }

    /// Checks shapes and weights against the grid and the number of fuels.
    pub fn check(&self, grid: &TradingGrid, n_fuels: usize) -> Result<(), ProcessError> {
        if self.paths.is_empty() {
            return Err(ProcessError::Empty);
        }
        let n = grid.n_slots();
        let steps = grid.time_steps().len();
        let mut total = S::zero();
        for (k, p) in self.paths.iter().enumerate() {
            if !(p.weight > S::zero()) {
                return Err(ProcessError::Path { path: k, msg: "weight must be positive".into() });
            }
            total += p.weight.clone();
            if p.pi.len() != n {
                return Err(ProcessError::Path { path: k, msg: format!("pi has {} values, expected {n}", p.pi.len()) });
            }
            if p.g.len() != n * n_fuels {
                return Err(ProcessError::Path {
                    path: k,
                    msg: format!("g has {} values, expected {}", p.g.len(), n * n_fuels),
                });
            }
            if p.g_em.len() != n {
                return Err(ProcessError::Path {
                    path: k,
                    msg: format!("g_em has {} values, expected {n}", p.g_em.len()),
                });
            }
            if let Some(nodes) = &p.nodes {
                if nodes.len() != steps {
                    return Err(ProcessError::Path {
                        path: k,
                        msg: format!("nodes has {} entries, expected {steps}", nodes.len()),
                    });
                }
            }
        }
        let one = S::one();
        let dev = (total.clone() - one.clone()).magnitude();
        if !(dev.negligible(&one) || dev.approx_f64() <= 1e-12) {
            return Err(ProcessError::Weights(total.approx_f64()));
        }
        Ok(())
    }

    /// Values of every coordinate observed at step `k`, per path.
    fn observed_at(&self, grid: &TradingGrid, n_fuels: usize, k: usize) -> Vec<usize> {
        let slot_steps = grid.slot_steps();
        let mut coords = Vec::new();
        let n = slot_steps.len();
        for (s, &st) in slot_steps.iter().enumerate() {
            if st == k {
                coords.push(s);
                for l in 0..n_fuels {
                    coords.push(n + s * n_fuels + l);
                }
                coords.push(n + n * n_fuels + s);
            }
        }
        coords
    }

    fn coord(&self, p: usize, c: usize, n: usize, n_fuels: usize) -> &S {
        let path = &self.paths[p];
        if c < n {
            &path.pi[c]
        } else if c < n + n * n_fuels {
            &path.g[c - n]
        } else {
            &path.g_em[c - n - n * n_fuels]
        }
    }

    /// Builds the filtration, either from explicit node ids or from the
    /// values observed so far, and checks that it forms a tree that is
    /// consistent with the observed values.
    pub fn filtration(&self, grid: &TradingGrid, n_fuels: usize) -> Result<Filtration, ProcessError> {
        self.check(grid, n_fuels)?;
        let steps = grid.time_steps().len();
        let n = grid.n_slots();
        let explicit = self.paths.iter().filter(|p| p.nodes.is_some()).count();
        if explicit != 0 && explicit != self.paths.len() {
            return Err(ProcessError::Filtration("node ids must be given on all paths or none".into()));
        }
        let np = self.paths.len();
        let mut node = vec![vec![0usize; steps]; np];
        let mut counts = vec![0usize; steps];
        for k in 0..steps {
            let observed = self.observed_at(grid, n_fuels, k);
            // Key: parent node plus a label for the current step.
            let mut ids: BTreeMap<(usize, usize), usize> = BTreeMap::new();
            let mut reps: Vec<usize> = Vec::new();
            for p in 0..np {
                let parent = if k == 0 { 0 } else { node[p][k - 1] };
                let label = if explicit > 0 {
                    self.paths[p].nodes.as_ref().unwrap()[k]
                } else {
                    // Natural filtration: first earlier path with equal values.
                    let mut lab = p;
                    for &q in &reps {
                        let q_parent = if k == 0 { 0 } else { node[q][k - 1] };
                        if q_parent == parent
                            && observed.iter().all(|&c| self.coord(p, c, n, n_fuels) == self.coord(q, c, n, n_fuels))
                        {
                            lab = q;
                            break;
                        }
                    }
                    if lab == p {
                        reps.push(p);
                    }
                    lab
                };
                let next = ids.len();
                let id = *ids.entry((parent, label)).or_insert(next);
                node[p][k] = id;
            }
            counts[k] = ids.len();
            if explicit > 0 {
                // Explicit labels must not merge different parents.
                let mut owner: BTreeMap<usize, usize> = BTreeMap::new();
                for p in 0..np {
                    let label = self.paths[p].nodes.as_ref().unwrap()[k];
                    let parent = if k == 0 { 0 } else { node[p][k - 1] };
                    if let Some(&prev) = owner.get(&label) {
                        if prev != parent {
                            return Err(ProcessError::Filtration(format!(
                                "node {label} at step {k} has two different ancestors"
                            )));
                        }
                    } else {
                        owner.insert(label, parent);
                    }
                }
                // Paths sharing a node must agree on everything observed so far.
                let mut first: BTreeMap<usize, usize> = BTreeMap::new();
                for p in 0..np {
                    let id = node[p][k];
                    match first.get(&id) {
                        None => {
                            first.insert(id, p);
                        }
                        Some(&q) => {
                            for kk in 0..=k {
                                for c in self.observed_at(grid, n_fuels, kk) {
                                    if self.coord(p, c, n, n_fuels) != self.coord(q, c, n, n_fuels) {
                                        return Err(ProcessError::Filtration(format!(
                                            "paths {q} and {p} share node {id} at step {k} but differ in observed values"
                                        )));
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(Filtration { node, counts })
    }

    /// Weighted mean of an arbitrary per-path quantity.
    pub fn mean_of<F: Fn(usize) -> S>(&self, f: F) -> S {
        let mut acc = S::zero();
        for (p, path) in self.paths.iter().enumerate() {
            acc += path.weight.clone() * f(p);
        }
        acc
    }

    /// Conditional expectation of `f` given the node at step `k`, returned
    /// per path. `k = None` conditions on the root (trivial information).
    pub fn conditional<F: Fn(usize) -> S>(&self, filt: &Filtration, k: Option<usize>, f: F) -> Vec<S> {
        let np = self.paths.len();
        let key = |p: usize| k.map(|k| filt.node[p][k]).unwrap_or(0);
        let mut num: BTreeMap<usize, S> = BTreeMap::new();
        let mut den: BTreeMap<usize, S> = BTreeMap::new();
        for p in 0..np {
            let w = self.paths[p].weight.clone();
            let e = num.entry(key(p)).or_insert_with(S::zero);
            *e += w.clone() * f(p);
            let d = den.entry(key(p)).or_insert_with(S::zero);
            *d += w;
        }
        (0..np).map(|p| num[&key(p)].clone() / den[&key(p)].clone()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(w: f64, pi: Vec<f64>) -> PathRecord<f64> {
        let n = pi.len();
        PathRecord { weight: w, pi, g: vec![1.0; n], g_em: vec![0.0; n], nodes: None }
    }

    #[test]
    fn natural_filtration_groups_equal_prefixes() {
        let grid = TradingGrid::single(vec![1.0, 2.0, 3.0]);
        let e = PathEnsemble::new(vec![
            rec(0.25, vec![1.0, 2.0, 3.0]),
            rec(0.25, vec![1.0, 2.0, 4.0]),
            rec(0.5, vec![1.0, 0.0, 5.0]),
        ]);
        let f = e.filtration(&grid, 1).unwrap();
        assert_eq!(f.counts, vec![1, 2, 3]);
        assert_eq!(f.node[0][1], f.node[1][1]);
        assert_ne!(f.node[0][1], f.node[2][1]);
    }

    #[test]
    fn explicit_nodes_must_match_values() {
        let grid = TradingGrid::single(vec![1.0, 2.0]);
        let mut a = rec(0.5, vec![1.0, 2.0]);
        let mut b = rec(0.5, vec![1.0, 3.0]);
        a.nodes = Some(vec![0, 0]);
        b.nodes = Some(vec![0, 0]);
        let e = PathEnsemble::new(vec![a, b]);
        assert!(matches!(e.filtration(&grid, 1), Err(ProcessError::Filtration(_))));
    }

    #[test]
    fn weights_must_sum_to_one() {
        let grid = TradingGrid::single(vec![1.0]);
        let e = PathEnsemble::new(vec![rec(0.5, vec![1.0]), rec(0.4, vec![2.0])]);
        assert!(matches!(e.check(&grid, 1), Err(ProcessError::Weights(_))));
    }
}
