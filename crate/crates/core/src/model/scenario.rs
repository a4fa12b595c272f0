use serde::{Deserialize, Serialize};

use super::grid::TradingGrid;
use crate::error::ModelError;
use crate::process::PathEnsemble;
use crate::scalar::Scalar;

pub const SCHEMA: &str = "equiterm/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub struct Fuel<S> {
    pub name: String,
    /// Emission units per unit of electricity produced from this fuel.
    pub emission_intensity: S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub struct PowerPlant<S> {
    pub name: String,
    pub fuel: String,
    pub capacity: S,
    /// Largest increase of output between consecutive deliveries.
    pub ramp_up: S,
    /// Largest decrease, given as a non-positive change.
    pub ramp_down: S,
    /// Fuel units burned per unit of electricity.
    pub efficiency: S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub struct Producer<S> {
    pub name: String,
    pub risk_aversion: S,
    pub plants: Vec<PowerPlant<S>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de> + Default"))]
pub struct Consumer<S> {
    pub name: String,
    pub risk_aversion: S,
    /// Share `p_c` of total demand served by this retailer.
    pub demand_share: S,
    /// Retail price `s_c`; only enters reported profit.
    #[serde(default)]
    pub retail_price: S,
}

/// Covariance of the discounted vector `(Pi, G, G_em)` in canonical order,
/// as dense row-major blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub struct CovarianceBlocks<S> {
    /// `N x N`, prices with prices.
    pub q1: Vec<Vec<S>>,
    /// `N x N(|L|+1)`, prices with fuel and emission prices.
    pub q2: Vec<Vec<S>>,
    /// `N(|L|+1) x N(|L|+1)`, fuel and emission prices.
    pub q3: Vec<Vec<S>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub struct ExogenousModel<S> {
    /// Expected demand `D(T_j)` per delivery.
    pub demand: Vec<S>,
    /// Expected undiscounted fuel forwards, canonical `(delivery, trading time, fuel)` order.
    pub fuel_forwards: Vec<S>,
    /// Expected undiscounted emission forwards per slot.
    pub emission_forwards: Vec<S>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<CovarianceBlocks<S>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<PathEnsemble<S>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub struct Bounds<S> {
    pub v_trade: S,
    pub f_trade: S,
    pub pi_max: S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de> + Default"))]
pub struct Scenario<S> {
    pub schema: String,
    pub grid: TradingGrid,
    pub fuels: Vec<Fuel<S>>,
    pub producers: Vec<Producer<S>>,
    pub consumers: Vec<Consumer<S>>,
    pub exogenous: ExogenousModel<S>,
    pub bounds: Bounds<S>,
}

impl Scenario<f64> {
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let s: Scenario<f64> = serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
        if s.schema != SCHEMA {
            return Err(ModelError::Schema(s.schema));
        }
        s.check_shapes()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

impl<S: Scalar> Scenario<S> {
    pub fn n_fuels(&self) -> usize {
        self.fuels.len()
    }

    pub fn fuel_index(&self, name: &str) -> Option<usize> {
        self.fuels.iter().position(|f| f.name == name)
    }

    /// Structural invariants that do not need any numerical work.
    pub fn check_shapes(&self) -> Result<(), ModelError> {
        self.grid.check()?;
        let n = self.grid.n_slots();
        let nl = self.fuels.len();
        let nj = self.grid.n_deliveries();
        let bad = |m: String| Err(ModelError::Invalid(m));
        for (i, f) in self.fuels.iter().enumerate() {
            if self.fuels[..i].iter().any(|g| g.name == f.name) {
                return bad(format!("duplicate fuel {:?}", f.name));
            }
            if f.emission_intensity < S::zero() {
                return bad(format!("fuel {:?} has negative emission intensity", f.name));
            }
        }
        for p in &self.producers {
            if !(p.risk_aversion > S::zero()) {
                return bad(format!("producer {:?} needs positive risk aversion", p.name));
            }
            if p.plants.is_empty() {
                return bad(format!("producer {:?} owns no plants", p.name));
            }
            for (k, r) in p.plants.iter().enumerate() {
                if p.plants[..k].iter().any(|q| q.name == r.name) {
                    return bad(format!("producer {:?} has duplicate plant {:?}", p.name, r.name));
                }
                if self.fuel_index(&r.fuel).is_none() {
                    return bad(format!("plant {:?} burns unknown fuel {:?}", r.name, r.fuel));
                }
                if !(r.capacity > S::zero()) || !(r.efficiency > S::zero()) {
                    return bad(format!("plant {:?} needs positive capacity and efficiency", r.name));
                }
                if r.ramp_down > S::zero() || r.ramp_up < S::zero() {
                    return bad(format!("plant {:?} needs ramp_down <= 0 <= ramp_up", r.name));
                }
            }
        }
        for c in &self.consumers {
            if !(c.risk_aversion > S::zero()) {
                return bad(format!("consumer {:?} needs positive risk aversion", c.name));
            }
            if c.demand_share < S::zero() || c.demand_share > S::one() {
                return bad(format!("consumer {:?} has demand share outside [0, 1]", c.name));
            }
        }
        let ex = &self.exogenous;
        if ex.demand.len() != nj {
            return bad(format!("demand has {} entries, expected {nj}", ex.demand.len()));
        }
        if ex.demand.iter().any(|d| *d < S::zero()) {
            return bad("demand must be non-negative".into());
        }
        if ex.fuel_forwards.len() != n * nl {
            return bad(format!("fuel_forwards has {} entries, expected {}", ex.fuel_forwards.len(), n * nl));
        }
        if ex.emission_forwards.len() != n {
            return bad(format!("emission_forwards has {} entries, expected {n}", ex.emission_forwards.len()));
        }
        match (&ex.covariance, &ex.ensemble) {
            (Some(c), None) => {
                let m = n * (nl + 1);
                let dims = |b: &Vec<Vec<S>>, r: usize, c: usize| b.len() == r && b.iter().all(|row| row.len() == c);
                if !dims(&c.q1, n, n) || !dims(&c.q2, n, m) || !dims(&c.q3, m, m) {
                    return bad(format!("covariance blocks must be {n}x{n}, {n}x{m} and {m}x{m}"));
                }
            }
            (None, Some(e)) => {
                e.check(&self.grid, nl).map_err(|e| ModelError::Invalid(format!("ensemble: {e}")))?;
            }
            _ => return bad("exactly one of covariance or ensemble must be given".into()),
        }
        Ok(())
    }

    /// Converts every numeric field to another scalar type.
    pub fn cast<T: Scalar>(&self) -> Scenario<T> {
        let c = |x: &S| T::lit(x.approx_f64());
        let cv = |v: &Vec<S>| v.iter().map(c).collect::<Vec<T>>();
        let cm = |m: &Vec<Vec<S>>| m.iter().map(cv).collect::<Vec<_>>();
        Scenario {
            schema: self.schema.clone(),
            grid: self.grid.clone(),
            fuels: self
                .fuels
                .iter()
                .map(|f| Fuel { name: f.name.clone(), emission_intensity: c(&f.emission_intensity) })
                .collect(),
            producers: self
                .producers
                .iter()
                .map(|p| Producer {
                    name: p.name.clone(),
                    risk_aversion: c(&p.risk_aversion),
                    plants: p
                        .plants
                        .iter()
                        .map(|r| PowerPlant {
                            name: r.name.clone(),
                            fuel: r.fuel.clone(),
                            capacity: c(&r.capacity),
                            ramp_up: c(&r.ramp_up),
                            ramp_down: c(&r.ramp_down),
                            efficiency: c(&r.efficiency),
                        })
                        .collect(),
                })
                .collect(),
            consumers: self
                .consumers
                .iter()
                .map(|k| Consumer {
                    name: k.name.clone(),
                    risk_aversion: c(&k.risk_aversion),
                    demand_share: c(&k.demand_share),
                    retail_price: c(&k.retail_price),
                })
                .collect(),
            exogenous: ExogenousModel {
                demand: cv(&self.exogenous.demand),
                fuel_forwards: cv(&self.exogenous.fuel_forwards),
                emission_forwards: cv(&self.exogenous.emission_forwards),
                covariance: self.exogenous.covariance.as_ref().map(|b| CovarianceBlocks {
                    q1: cm(&b.q1),
                    q2: cm(&b.q2),
                    q3: cm(&b.q3),
                }),
                ensemble: self.exogenous.ensemble.as_ref().map(|e| e.cast()),
            },
            bounds: Bounds {
                v_trade: c(&self.bounds.v_trade),
                f_trade: c(&self.bounds.f_trade),
                pi_max: c(&self.bounds.pi_max),
            },
        }
    }

    /// Total capacity of all plants.
    pub fn total_capacity(&self) -> S {
        let mut acc = S::zero();
        for p in &self.producers {
            for r in &p.plants {
                acc += r.capacity.clone();
            }
        }
        acc
    }

    /// Risk-aversion coefficients of all players, producers first.
    pub fn risk_aversions(&self) -> Vec<S> {
        self.producers
            .iter()
            .map(|p| p.risk_aversion.clone())
            .chain(self.consumers.iter().map(|c| c.risk_aversion.clone()))
            .collect()
    }

    pub fn player_names(&self) -> Vec<String> {
        self.producers.iter().map(|p| p.name.clone()).chain(self.consumers.iter().map(|c| c.name.clone())).collect()
    }
}
