use super::grid::TradingGrid;
use super::scenario::{Fuel, Producer};

/// A producer decision variable addressed by delivery `j`, trading index
/// `i` within `I_j`, fuel `l` and canonical plant rank `r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    V { j: usize, i: usize },
    F { j: usize, i: usize, l: usize },
    O { j: usize, i: usize },
    W { j: usize, r: usize },
}

/// Canonical positions of a producer's variables
/// `v = [V (N), F (N|L|), O (N), W (|J| R)]`.
///
/// Slots run delivery-major then trading time; `F` adds fuel as the fastest
/// index; `W` runs delivery-major, then fuel, then plant name.
#[derive(Debug, Clone, PartialEq)]
pub struct ProducerLayout {
    pub n_slots: usize,
    pub n_fuels: usize,
    pub n_deliveries: usize,
    offsets: Vec<usize>,
    /// `plant_order[r]` is the index in `producer.plants` of canonical plant `r`.
    pub plant_order: Vec<usize>,
    /// Fuel index of canonical plant `r`.
    pub plant_fuel: Vec<usize>,
}

impl ProducerLayout {
    pub fn new<S>(grid: &TradingGrid, fuels: &[Fuel<S>], producer: &Producer<S>) -> Self {
        let fuel_of = |name: &str| fuels.iter().position(|f| f.name == name).unwrap_or(usize::MAX);
        let mut order: Vec<usize> = (0..producer.plants.len()).collect();
        order.sort_by(|&a, &b| {
            let (pa, pb) = (&producer.plants[a], &producer.plants[b]);
            fuel_of(&pa.fuel).cmp(&fuel_of(&pb.fuel)).then_with(|| pa.name.cmp(&pb.name))
        });
        let plant_fuel = order.iter().map(|&k| fuel_of(&producer.plants[k].fuel)).collect();
        Self {
            n_slots: grid.n_slots(),
            n_fuels: fuels.len(),
            n_deliveries: grid.n_deliveries(),
            offsets: (0..grid.n_deliveries()).map(|j| grid.offset(j)).collect(),
            plant_order: order,
            plant_fuel,
        }
    }

    pub fn n_plants(&self) -> usize {
        self.plant_order.len()
    }

    pub fn dim(&self) -> usize {
        self.n_slots * (self.n_fuels + 2) + self.n_deliveries * self.n_plants()
    }

    /// Length of the `(V, F, O)` part that carries curvature.
    pub fn priced_dim(&self) -> usize {
        self.n_slots * (self.n_fuels + 2)
    }

    pub fn slot(&self, j: usize, i: usize) -> usize {
        self.offsets[j] + i
    }

    pub fn v(&self, s: usize) -> usize {
        s
    }

    pub fn f(&self, s: usize, l: usize) -> usize {
        self.n_slots + s * self.n_fuels + l
    }

    pub fn o(&self, s: usize) -> usize {
        self.n_slots * (1 + self.n_fuels) + s
    }

    pub fn w(&self, j: usize, r: usize) -> usize {
        self.priced_dim() + j * self.n_plants() + r
    }

    pub fn position(&self, var: Var) -> usize {
        match var {
            Var::V { j, i } => self.v(self.slot(j, i)),
            Var::F { j, i, l } => self.f(self.slot(j, i), l),
            Var::O { j, i } => self.o(self.slot(j, i)),
            Var::W { j, r } => self.w(j, r),
        }
    }

    /// Canonical rank of the plant at `producer.plants[k]`.
    pub fn rank_of(&self, k: usize) -> usize {
        self.plant_order.iter().position(|&x| x == k).expect("plant index in range")
    }
}

/// Canonical position map of a producer's variables.
pub fn canonical_index<S>(grid: &TradingGrid, fuels: &[Fuel<S>], producer: &Producer<S>) -> ProducerLayout {
    ProducerLayout::new(grid, fuels, producer)
}
