//! Imaginary-time reweighting of a cycle-state MPS by a diagonal window energy.

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use super::EnergyModel;
use crate::count::CountMethod;
use crate::error::{Error, Result};
use crate::lattice::SnakeMap;
use crate::tn::{count_from_mps, Mps};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoltzmannOptions {
    /// Bond cap applied after each gate.
    pub chi_max: usize,
    /// Relative singular value cutoff for the same compression.
    pub cutoff: f64,
}

impl Default for BoltzmannOptions {
    fn default() -> Self {
        Self {
            chi_max: 512,
            cutoff: 1e-12,
        }
    }
}

/// Where the cycle count used to turn the squared norm into `Z` came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum CountSource {
    Exact { value: f64, method: CountMethod },
    /// `2^N <+|psi>^2` evaluated on the input state.
    FromMps,
}

#[derive(Debug, Clone)]
pub struct BoltzmannResult {
    pub mps: Mps,
    pub beta: f64,
    /// Squared norm after the gates relative to the input norm.
    pub rho: f64,
    pub cycle_count: f64,
    pub count_source: CountSource,
    pub z_estimate: f64,
    /// Summed relative weight discarded by the compressions.
    pub truncation: f64,
}

/// Applies `exp(-beta H / 2)` gate by gate and renormalizes.
pub fn boltzmann_mps(
    mps: &Mps,
    model: &EnergyModel,
    beta: f64,
    count: CountSource,
    opts: &BoltzmannOptions,
) -> Result<BoltzmannResult> {
    let table = model.window_table().ok_or_else(|| {
        Error::Unsupported(format!("{model:?} has no local window form"))
    })?;
    if !beta.is_finite() {
        return Err(Error::Validation(format!("beta must be finite, got {beta}")));
    }
    let cycle_count = match count {
        CountSource::Exact { value, .. } => value,
        CountSource::FromMps => count_from_mps(mps),
    };
    let before = mps.norm_sq();
    let mut out = mps.clone();
    let mut truncation = 0.0;
    if beta != 0.0 {
        let shape = mps.shape;
        let snake = SnakeMap::new(shape);
        let gate: Vec<f64> = table.iter().map(|e| (-0.5 * beta * e).exp()).collect();
        for i in 0..shape.m {
            for j in 0..shape.n {
                let plaq = [(i, j), (i, j + 1), (i + 1, j), (i + 1, j + 1)];
                let mut support: Vec<(usize, usize)> = plaq
                    .iter()
                    .enumerate()
                    .filter_map(|(k, &(a, b))| snake.position(a, b).ok().map(|t| (t, k)))
                    .collect();
                support.sort_unstable();
                apply_window_gate(&mut out, &support, &gate);
                truncation += out.compress(opts.chi_max, opts.cutoff);
            }
        }
    }
    let rho = out.norm_sq() / before;
    out.normalize();
    Ok(BoltzmannResult {
        mps: out,
        beta,
        rho,
        cycle_count,
        count_source: count,
        z_estimate: cycle_count * rho,
        truncation,
    })
}

/// Multiplies in a diagonal gate `f(code)` over the chain sites in `support`
/// (`(site, window bit)` pairs sorted by site). Channels carry the bits read
/// so far; the value is emitted at the last support site.
fn apply_window_gate(mps: &mut Mps, support: &[(usize, usize)], f: &[f64]) {
    let Some(&(last, _)) = support.last() else {
        mps.tensors[0].mapv_inplace(|x| x * f[0]);
        return;
    };
    let first = support[0].0;
    let mut q = 0usize;
    for t in first..=last {
        let a = &mps.tensors[t];
        let (al, _, ar) = a.dim();
        let dl = 1usize << q;
        let hit = support.get(q).filter(|s| s.0 == t).map(|s| s.1);
        let mut w = match hit {
            Some(_) if t == last => Array3::zeros((dl, 2, 1)),
            Some(_) => Array3::zeros((dl, 2, 2 * dl)),
            None => Array3::zeros((dl, 2, dl)),
        };
        for p in 0..dl {
            for s in 0..2usize {
                match hit {
                    Some(bit) if t == last => {
                        let mut code = s << bit;
                        for (k, &(_, b)) in support[..q].iter().enumerate() {
                            code |= ((p >> k) & 1) << b;
                        }
                        w[[p, s, 0]] = f[code];
                    }
                    Some(_) => w[[p, s, p | s << q]] = 1.0,
                    None => w[[p, s, p]] = 1.0,
                }
            }
        }
        let (wl, _, wr) = w.dim();
        let mut b = Array3::zeros((wl * al, 2, wr * ar));
        for x in 0..wl {
            for s in 0..2 {
                for y in 0..wr {
                    let c = w[[x, s, y]];
                    if c == 0.0 {
                        continue;
                    }
                    for l in 0..al {
                        for r in 0..ar {
                            b[[x * al + l, s, y * ar + r]] = c * a[[l, s, r]];
                        }
                    }
                }
            }
        }
        mps.tensors[t] = b;
        if hit.is_some() {
            q += 1;
        }
    }
    mps.center = None;
}

/// Total window energy of a basis index.
#[cfg(test)]
fn dense_energy(shape: crate::lattice::LatticeShape, idx: u64, table: &[f64; 16]) -> f64 {
    let cfg = crate::lattice::DualConfig::from_index(shape, idx).unwrap();
    let mut e = 0.0;
    for i in 0..shape.m {
        for j in 0..shape.n {
            e += table[super::window_code(cfg.window(i, j))];
        }
    }
    e
}
