//! Statevector amplitude amplification of the all-ones state out of the
//! Hadamard-rotated cycle state.

use serde::{Deserialize, Serialize};

use crate::count::brute_force_cycles;
use crate::error::{Error, Result};
use crate::lattice::LatticeShape;

/// Largest number of bulk sites for the dense statevector.
pub const STATEVECTOR_MAX_SITES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplifyStep {
    pub k: usize,
    pub p: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AmplificationRun {
    pub shape: LatticeShape,
    pub sites: usize,
    pub cycle_count: usize,
    /// `|<1...1|H^N|X>|^2 = |X| / 2^N`.
    pub r: f64,
    pub trace: Vec<AmplifyStep>,
    /// First peak of the trace: the iteration a single Grover run stops at.
    pub k_opt: usize,
    pub p_opt: f64,
    /// Argmax over the whole window, which may sit on a later revival.
    pub k_global_max: usize,
    /// Largest deviation of the trace from [`grover_probability`].
    pub closed_form_deviation: f64,
}

/// `sin^2((2k+1) asin(sqrt r))`.
pub fn grover_probability(r: f64, k: usize) -> f64 {
    ((2 * k + 1) as f64 * r.sqrt().asin()).sin().powi(2)
}

fn walsh_hadamard(v: &mut [f64]) {
    let n = v.len();
    let mut h = 1;
    while h < n {
        for i in (0..n).step_by(2 * h) {
            for j in i..i + h {
                let (a, b) = (v[j], v[j + h]);
                v[j] = a + b;
                v[j + h] = a - b;
            }
        }
        h *= 2;
    }
    let s = 1.0 / (n as f64).sqrt();
    v.iter_mut().for_each(|x| *x *= s);
}

/// Runs `max_iterations` rounds of `S_HC S_1` on `H^N |X>`, where `S_1`
/// flips the sign of `|1...1>` and `S_HC` reflects about the start state.
pub fn amplify_count(shape: LatticeShape, max_iterations: usize) -> Result<AmplificationRun> {
    let n = shape.num_bulk();
    if n > STATEVECTOR_MAX_SITES {
        return Err(Error::ResourceLimit {
            what: "bulk sites for statevector amplification",
            limit: STATEVECTOR_MAX_SITES,
            requested: n,
        });
    }
    let cycles = brute_force_cycles(shape)?;
    if cycles.is_empty() {
        return Err(Error::Validation(format!("{shape} has no Hamiltonian cycle")));
    }
    let dim = 1usize << n;
    let mut psi0 = vec![0.0; dim];
    let a = 1.0 / (cycles.len() as f64).sqrt();
    for &c in &cycles {
        psi0[c as usize] = a;
    }
    walsh_hadamard(&mut psi0);
    let target = dim - 1;
    let r = cycles.len() as f64 / dim as f64;

    let mut psi = psi0.clone();
    let mut trace = Vec::with_capacity(max_iterations + 1);
    trace.push(AmplifyStep { k: 0, p: psi[target] * psi[target] });
    for k in 1..=max_iterations {
        psi[target] = -psi[target];
        let ov: f64 = psi0.iter().zip(&psi).map(|(x, y)| x * y).sum();
        for (y, x) in psi.iter_mut().zip(&psi0) {
            *y = 2.0 * ov * x - *y;
        }
        trace.push(AmplifyStep { k, p: psi[target] * psi[target] });
    }
    let first_peak = trace
        .windows(2)
        .find(|w| w[1].p < w[0].p)
        .map_or(trace[trace.len() - 1], |w| w[0]);
    let global = trace
        .iter()
        .copied()
        .fold(trace[0], |b, s| if s.p > b.p { s } else { b });
    let closed_form_deviation = trace
        .iter()
        .map(|s| (s.p - grover_probability(r, s.k)).abs())
        .fold(0.0, f64::max);
    Ok(AmplificationRun {
        shape,
        sites: n,
        cycle_count: cycles.len(),
        r,
        trace,
        k_opt: first_peak.k,
        p_opt: first_peak.p,
        k_global_max: global.k,
        closed_form_deviation,
    })
}

/// Least-squares slope of `log k_opt` against `log r`.
pub fn fit_exponent(runs: &[AmplificationRun]) -> Result<f64> {
    let pts: Vec<(f64, f64)> = runs
        .iter()
        .filter(|r| r.k_opt > 0)
        .map(|r| (r.r.ln(), (r.k_opt as f64).ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::Validation("need two runs with k_opt > 0".into()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}
