//! Finite-temperature ensembles, sequence dressing and amplitude
//! amplification on top of the uniform cycle state.

use std::fmt;
use std::sync::Arc;

use crate::lattice::DualConfig;

mod amplify;
mod boltzmann;
mod dress;

pub use amplify::{
    amplify_count, fit_exponent, grover_probability, AmplificationRun, AmplifyStep,
    STATEVECTOR_MAX_SITES,
};
pub use boltzmann::{boltzmann_mps, BoltzmannOptions, BoltzmannResult, CountSource};
pub use dress::{
    cycle_walk, dress, dress_with_order, dressed_csv, heteropolymer_partition, ChemicalSequence,
    ContactModel, DressedEnsemble, DressedTerm, HpPartition, DRESSED_CSV_SCHEMA,
};

/// Diagonal polymer energy of a configuration.
#[derive(Clone)]
pub enum EnergyModel {
    /// `epsilon` per corner of the path.
    Bend { epsilon: f64 },
    /// Sum over vertices of `table[code]`, where bit `k` of the code is the
    /// `k`-th plaquette of the vertex window.
    Window { table: [f64; 16] },
    /// Any diagonal energy; not expressible as window gates.
    Custom {
        name: String,
        eval: Arc<dyn Fn(&DualConfig) -> f64 + Send + Sync>,
    },
}

impl fmt::Debug for EnergyModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnergyModel::Bend { epsilon } => write!(f, "Bend({epsilon})"),
            EnergyModel::Window { table } => write!(f, "Window({table:?})"),
            EnergyModel::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

impl Default for EnergyModel {
    fn default() -> Self {
        EnergyModel::Bend { epsilon: 1.0 }
    }
}

impl EnergyModel {
    /// Per-vertex window energies, when the model has that form.
    pub fn window_table(&self) -> Option<[f64; 16]> {
        match self {
            EnergyModel::Bend { epsilon } => {
                let mut t = [0.0; 16];
                for (code, e) in t.iter_mut().enumerate() {
                    if matches!(code.count_ones(), 1 | 3) {
                        *e = *epsilon;
                    }
                }
                Some(t)
            }
            EnergyModel::Window { table } => Some(*table),
            EnergyModel::Custom { .. } => None,
        }
    }

    pub fn energy(&self, cfg: &DualConfig) -> f64 {
        if let EnergyModel::Custom { eval, .. } = self {
            return eval(cfg);
        }
        let table = self.window_table().expect("window model");
        let s = cfg.shape();
        let mut e = 0.0;
        for i in 0..s.m {
            for j in 0..s.n {
                e += table[window_code(cfg.window(i, j))];
            }
        }
        e
    }
}

pub(crate) fn window_code(w: [bool; 4]) -> usize {
    w.iter().enumerate().fold(0, |c, (k, &b)| c | (b as usize) << k)
}
