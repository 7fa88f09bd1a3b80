//! Two-site DMRG restricted to a fixed particle number.
//!
//! Every Hamiltonian cycle encloses the same number of plaquettes, so the
//! cycle state lives in one particle-number sector. Bonds carry the number of
//! occupied sites to their left; tensors are stored as dense blocks per
//! charge and every contraction runs block by block.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::time::Instant;

use ndarray::{s, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::count::comb_cycle;
use crate::error::{Error, Result};
use crate::lattice::{DualConfig, LatticeShape, SnakeMap};
use crate::linalg::{eigh, svd};
use crate::rules::rule_graph_neighbors;
use crate::tn::mpo::{Mpo, MpoEntry};
use crate::tn::mps::{count_from_mps, Mps};

/// Dimensions of the charge sectors `q0, q0 + 1, ...` on one bond.
#[derive(Debug, Clone, PartialEq)]
struct Charges {
    q0: i32,
    dims: Vec<usize>,
}

impl Charges {
    fn idx(&self, q: i32) -> Option<usize> {
        let k = q - self.q0;
        (k >= 0 && (k as usize) < self.dims.len()).then_some(k as usize)
    }

    fn dim(&self, q: i32) -> usize {
        self.idx(q).map_or(0, |i| self.dims[i])
    }

    fn q(&self, i: usize) -> i32 {
        self.q0 + i as i32
    }

    fn total(&self) -> usize {
        self.dims.iter().sum()
    }

    fn offset(&self, i: usize) -> usize {
        self.dims[..i].iter().sum()
    }
}

/// Site tensor as blocks `b[left charge][s]` of shape
/// `(dim(q), dim_right(q + s))`.
#[derive(Debug, Clone)]
struct BSite {
    l: Charges,
    r: Charges,
    b: Vec<[Array2<f64>; 2]>,
}

impl BSite {
    fn to_dense(&self) -> Array3<f64> {
        let mut a = Array3::zeros((self.l.total(), 2, self.r.total()));
        for (li, blocks) in self.b.iter().enumerate() {
            let lo = self.l.offset(li);
            for (s, blk) in blocks.iter().enumerate() {
                if blk.is_empty() {
                    continue;
                }
                let ri = self.r.idx(self.l.q(li) + s as i32).unwrap();
                let ro = self.r.offset(ri);
                a.slice_mut(s![lo..lo + blk.nrows(), s, ro..ro + blk.ncols()])
                    .assign(blk);
            }
        }
        a
    }
}

/// Environment blocks `e[w][ket charge]` of shape
/// `(dim(q + charge(w)), dim(q))`, bra first.
type Env = Vec<Vec<Array2<f64>>>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DmrgOptions {
    /// Bond dimension cap per sweep; the last value repeats.
    pub chi_schedule: Vec<usize>,
    pub max_sweeps: usize,
    /// Stop once a full sweep changes the energy by less than this, at the
    /// final bond dimension.
    pub energy_tol: f64,
    pub seed: u64,
    /// Schmidt values below this (state normalized) are always dropped.
    pub svd_cutoff: f64,
    pub lanczos_krylov: usize,
    pub lanczos_restarts: usize,
    pub lanczos_tol: f64,
    /// Hamiltonian cycles superposed in the initial state, gathered
    /// breadth-first through single rewrite moves from one fixed cycle.
    pub init_cycles: usize,
    /// Bond dimension of the random part of the initial state.
    pub init_chi: usize,
    /// Weight of the random part relative to the initial cycle.
    pub init_noise: f64,
    /// Weight of the Hamiltonian-applied perturbation mixed into the reduced
    /// density matrix before truncation, halved every sweep.
    pub noise: f64,
    /// Number of leading sweeps that use the perturbation.
    pub noise_sweeps: usize,
    /// Particle number; defaults to the plaquette count enclosed by any
    /// Hamiltonian cycle.
    pub particles: Option<usize>,
    /// Evaluate the count estimate after every sweep and stop as soon as it
    /// is within this target.
    pub count_target: Option<CountTarget>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountTarget {
    pub exact: f64,
    pub rel_eps: f64,
}

impl Default for DmrgOptions {
    fn default() -> Self {
        DmrgOptions {
            chi_schedule: vec![16, 32, 64],
            max_sweeps: 20,
            energy_tol: 1e-9,
            seed: 0x5eed,
            svd_cutoff: 1e-9,
            lanczos_krylov: 24,
            lanczos_restarts: 3,
            lanczos_tol: 1e-10,
            init_cycles: 16,
            init_chi: 4,
            init_noise: 0.1,
            noise: 1e-3,
            noise_sweeps: 4,
            particles: None,
            count_target: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRecord {
    pub sweep: usize,
    pub chi: usize,
    pub energy: f64,
    pub max_bond: usize,
    /// Largest discarded weight of any split in the sweep.
    pub truncation: f64,
    pub solver_failures: usize,
    /// Sweep wall time, excluding the count evaluation.
    pub seconds: f64,
    /// Present when a count target is set.
    pub count_estimate: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct DmrgResult {
    pub mps: Mps,
    pub energy: f64,
    pub trace: Vec<SweepRecord>,
    pub converged: bool,
    /// The count target, if any, was met.
    pub reached_target: bool,
}

/// Plaquettes enclosed by any Hamiltonian cycle on an `m x n` grid.
pub fn cycle_area(shape: LatticeShape) -> Result<usize> {
    if (shape.m * shape.n) % 2 == 1 {
        return Err(Error::Validation(format!(
            "{shape} has an odd number of vertices and no Hamiltonian cycle"
        )));
    }
    Ok(shape.m * shape.n / 2 - 1)
}

fn binom_capped(n: usize, k: usize, cap: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc >= cap as u128 {
            return cap;
        }
    }
    acc as usize
}

/// Feasible charges on bond `t` (after `t` sites) of a chain of `len` sites
/// holding `n` particles.
fn feasible(t: usize, len: usize, n: usize) -> (i32, i32) {
    let lo = n.saturating_sub(len - t) as i32;
    let hi = t.min(n) as i32;
    (lo, hi)
}

struct State {
    sites: Vec<BSite>,
    len: usize,
}

fn random_block(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((r, c), |_| scale * (rng.gen::<f64>() - 0.5))
}

/// Up to `k` configurations of the rule-graph class of `start`, nearest first.
fn cycle_cluster(start: DualConfig, k: usize) -> Vec<DualConfig> {
    let mut seen = BTreeSet::from([start.bulk_bits()]);
    let mut queue = VecDeque::from([start]);
    let mut out = Vec::new();
    while let Some(cfg) = queue.pop_front() {
        if out.len() >= k {
            break;
        }
        for next in rule_graph_neighbors(&cfg) {
            if seen.insert(next.bulk_bits()) {
                queue.push_back(next);
            }
        }
        out.push(cfg);
    }
    out
}

/// Sum of the `seeds` product states, each on its own bond states, plus a
/// random part of bond dimension `chi` spread over all feasible charges.
fn initial_state(
    len: usize,
    n: usize,
    seeds: &[Vec<u8>],
    chi: usize,
    noise: f64,
    rng: &mut ChaCha8Rng,
) -> State {
    let prefix: Vec<Vec<i32>> = seeds
        .iter()
        .map(|bits| {
            let mut q = 0;
            let mut out = vec![0];
            for &b in bits {
                q += b as i32;
                out.push(q);
            }
            out
        })
        .collect();
    // row of seed k on bond t; boundary bonds have a single state
    let mut slot = vec![vec![0usize; seeds.len()]; len + 1];
    let mut bonds = Vec::with_capacity(len + 1);
    for t in 0..=len {
        let (lo, hi) = feasible(t, len, n);
        let mut dims = Vec::new();
        for q in lo..=hi {
            let qu = q as usize;
            let mut d = binom_capped(t, qu, chi)
                .min(binom_capped(len - t, n - qu, chi))
                .max(1);
            if t > 0 && t < len {
                for (k, p) in prefix.iter().enumerate() {
                    if p[t] == q {
                        slot[t][k] = d;
                        d += 1;
                    }
                }
            }
            dims.push(d);
        }
        bonds.push(Charges { q0: lo, dims });
    }
    let mut sites = Vec::with_capacity(len);
    for t in 0..len {
        let (l, r) = (bonds[t].clone(), bonds[t + 1].clone());
        let mut b = Vec::with_capacity(l.dims.len());
        for li in 0..l.dims.len() {
            let ql = l.q(li);
            let mut blk = |s: i32| {
                let mut m = random_block(rng, l.dims[li], r.dim(ql + s), noise);
                for (k, bits) in seeds.iter().enumerate() {
                    if prefix[k][t] == ql && bits[t] as i32 == s {
                        m[[slot[t][k], slot[t + 1][k]]] += 1.0;
                    }
                }
                m
            };
            let b0 = blk(0);
            let b1 = blk(1);
            b.push([b0, b1]);
        }
        sites.push(BSite { l, r, b });
    }
    State { sites, len }
}

/// Split `a` at its left bond: `a = C * B` with `B` right-isometric per
/// charge. Returns `C` per left charge.
fn right_orthonormalize(site: &mut BSite) -> Vec<Array2<f64>> {
    let mut carry = Vec::with_capacity(site.l.dims.len());
    let mut new_dims = Vec::with_capacity(site.l.dims.len());
    let mut new_blocks = Vec::with_capacity(site.l.dims.len());
    for li in 0..site.l.dims.len() {
        let ql = site.l.q(li);
        let c0 = site.r.dim(ql);
        let c1 = site.r.dim(ql + 1);
        let rows = site.l.dims[li];
        let mut m = Array2::zeros((rows, c0 + c1));
        m.slice_mut(s![.., ..c0]).assign(&site.b[li][0]);
        m.slice_mut(s![.., c0..]).assign(&site.b[li][1]);
        let (u, sv, vt) = svd(&m);
        let keep = sv.iter().filter(|&&x| x > 1e-14 * sv[0].max(1e-300)).count();
        let keep = if rows == 0 || c0 + c1 == 0 { 0 } else { keep };
        let us = &u.slice(s![.., ..keep]) * &sv.slice(s![..keep]);
        carry.push(us);
        new_dims.push(keep);
        new_blocks.push([
            vt.slice(s![..keep, ..c0]).to_owned(),
            vt.slice(s![..keep, c0..]).to_owned(),
        ]);
    }
    site.l.dims = new_dims;
    site.b = new_blocks;
    carry
}

fn absorb_right(site: &mut BSite, carry: &[Array2<f64>], new_r: &Charges) {
    for li in 0..site.l.dims.len() {
        let ql = site.l.q(li);
        for s in 0..2 {
            let blk = &site.b[li][s];
            site.b[li][s] = match new_r.idx(ql + s as i32) {
                Some(ri) => blk.dot(&carry[ri]),
                None => Array2::zeros((blk.nrows(), 0)),
            };
        }
    }
    site.r = new_r.clone();
}

fn right_canonicalize(st: &mut State) {
    for t in (1..st.len).rev() {
        let carry = right_orthonormalize(&mut st.sites[t]);
        let new_l = st.sites[t].l.clone();
        absorb_right(&mut st.sites[t - 1], &carry, &new_l);
    }
    // normalize the first site
    let nrm: f64 = st.sites[0]
        .b
        .iter()
        .flat_map(|bb| bb.iter())
        .flat_map(|m| m.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    for bb in st.sites[0].b.iter_mut() {
        for m in bb.iter_mut() {
            m.mapv_inplace(|x| x / nrm);
        }
    }
}

fn env_boundary() -> Env {
    vec![vec![Array2::from_elem((1, 1), 1.0)]]
}

fn group_by_wl(entries: &[MpoEntry]) -> BTreeMap<u32, Vec<MpoEntry>> {
    let mut m: BTreeMap<u32, Vec<MpoEntry>> = BTreeMap::new();
    for e in entries {
        m.entry(e.wl).or_default().push(*e);
    }
    m
}

fn grow_left(env: &Env, a: &BSite, entries: &[MpoEntry], cl: &[i32], cr: &[i32]) -> Env {
    let mut acc: BTreeMap<(u32, usize, u8, u8), Array2<f64>> = BTreeMap::new();
    let mut tcache: BTreeMap<(u32, usize, u8), Array2<f64>> = BTreeMap::new();
    for e in entries {
        let wl = e.wl as usize;
        for ki in 0..a.l.dims.len() {
            let q = a.l.q(ki);
            let lb = &env[wl][ki];
            if lb.is_empty() || a.b[ki][e.inp as usize].is_empty() {
                continue;
            }
            if a.l.idx(q + cl[wl]).is_none() {
                continue;
            }
            let t = tcache
                .entry((e.wl, ki, e.inp))
                .or_insert_with(|| lb.dot(&a.b[ki][e.inp as usize]));
            acc.entry((e.wr, ki, e.out, e.inp))
                .and_modify(|m| m.scaled_add(e.val, t))
                .or_insert_with(|| &*t * e.val);
        }
    }
    let mut out: Env = (0..cr.len())
        .map(|w| {
            (0..a.r.dims.len())
                .map(|kr| {
                    let q = a.r.q(kr);
                    Array2::zeros((a.r.dim(q + cr[w]), a.r.dims[kr]))
                })
                .collect()
        })
        .collect();
    for ((wr, ki, so, si), sm) in acc {
        let q = a.l.q(ki);
        let wr_u = wr as usize;
        let qb = q + cr[wr_u] - so as i32 + si as i32;
        let Some(bi) = a.l.idx(qb) else { continue };
        let bra = &a.b[bi][so as usize];
        let Some(kr) = a.r.idx(q + si as i32) else { continue };
        if bra.is_empty() || out[wr_u][kr].is_empty() {
            continue;
        }
        let prod = bra.t().dot(&sm);
        out[wr_u][kr] += &prod;
    }
    out
}

fn grow_right(env: &Env, b: &BSite, entries: &[MpoEntry], cl: &[i32]) -> Env {
    let mut acc: BTreeMap<(u32, usize, u8, u8), Array2<f64>> = BTreeMap::new();
    let mut tcache: BTreeMap<(u32, usize, u8), Array2<f64>> = BTreeMap::new();
    for e in entries {
        let wr = e.wr as usize;
        for kl in 0..b.l.dims.len() {
            let ql = b.l.q(kl);
            let Some(kr) = b.r.idx(ql + e.inp as i32) else { continue };
            let rb = &env[wr][kr];
            let ket = &b.b[kl][e.inp as usize];
            if rb.is_empty() || ket.is_empty() {
                continue;
            }
            let t = tcache
                .entry((e.wr, kl, e.inp))
                .or_insert_with(|| rb.dot(&ket.t()));
            acc.entry((e.wl, kl, e.out, e.inp))
                .and_modify(|m| m.scaled_add(e.val, t))
                .or_insert_with(|| &*t * e.val);
        }
    }
    let mut out: Env = (0..cl.len())
        .map(|w| {
            (0..b.l.dims.len())
                .map(|kl| {
                    let q = b.l.q(kl);
                    Array2::zeros((b.l.dim(q + cl[w]), b.l.dims[kl]))
                })
                .collect()
        })
        .collect();
    for ((wl, kl, so, _si), sm) in acc {
        let wl_u = wl as usize;
        let qb = b.l.q(kl) + cl[wl_u];
        let Some(bi) = b.l.idx(qb) else { continue };
        let bra = &b.b[bi][so as usize];
        if bra.is_empty() || out[wl_u][kl].is_empty() {
            continue;
        }
        let prod = bra.dot(&sm);
        out[wl_u][kl] += &prod;
    }
    out
}

/// Layout of a two-site wavefunction as a flat vector of blocks.
struct Theta {
    l: Charges,
    r: Charges,
    /// `(left index, s1, s2, rows, cols, offset)`
    blocks: Vec<(usize, u8, u8, usize, usize, usize)>,
    index: BTreeMap<(usize, u8, u8), usize>,
    len: usize,
}

impl Theta {
    fn new(l: &Charges, r: &Charges) -> Self {
        let mut blocks = Vec::new();
        let mut index = BTreeMap::new();
        let mut off = 0;
        for li in 0..l.dims.len() {
            for s1 in 0..2u8 {
                for s2 in 0..2u8 {
                    let rows = l.dims[li];
                    let cols = r.dim(l.q(li) + s1 as i32 + s2 as i32);
                    if rows == 0 || cols == 0 {
                        continue;
                    }
                    index.insert((li, s1, s2), blocks.len());
                    blocks.push((li, s1, s2, rows, cols, off));
                    off += rows * cols;
                }
            }
        }
        Theta {
            l: l.clone(),
            r: r.clone(),
            blocks,
            index,
            len: off,
        }
    }

    fn view<'a>(&self, v: &'a [f64], k: usize) -> ndarray::ArrayView2<'a, f64> {
        let (_, _, _, r, c, o) = self.blocks[k];
        ndarray::ArrayView2::from_shape((r, c), &v[o..o + r * c]).unwrap()
    }

    fn contract(&self, a: &BSite, b: &BSite) -> Vec<f64> {
        let mut v = vec![0.0; self.len];
        for &(li, s1, s2, r, c, o) in &self.blocks {
            let ql = self.l.q(li);
            let Some(mi) = a.r.idx(ql + s1 as i32) else { continue };
            let x = &a.b[li][s1 as usize];
            let y = &b.b[mi][s2 as usize];
            if x.is_empty() || y.is_empty() {
                continue;
            }
            let p = x.dot(y);
            v[o..o + r * c].copy_from_slice(p.as_slice().unwrap());
        }
        v
    }
}

struct LocalOp<'a> {
    theta: &'a Theta,
    left: &'a Env,
    right: &'a Env,
    c_l: &'a [i32],
    c_r: &'a [i32],
    site1: BTreeMap<u32, Vec<MpoEntry>>,
    site2: BTreeMap<u32, Vec<MpoEntry>>,
}

type HalfApplied = BTreeMap<u32, Vec<((usize, u8, u8, usize), Array2<f64>)>>;

impl LocalOp<'_> {
    /// Left environment and first site applied to `v`, keyed by the middle
    /// MPO channel and `(bra left, out, s2, ket right)`.
    fn left_half(&self, v: &[f64]) -> HalfApplied {
        let th = self.theta;
        let mut y: BTreeMap<u32, Vec<((usize, u8, u8, usize), Array2<f64>)>> = BTreeMap::new();
        let mut yidx: BTreeMap<(u32, usize, u8, u8, usize), usize> = BTreeMap::new();
        for (&wl, ents) in &self.site1 {
            let w = wl as usize;
            for (k, &(li, s1, s2, _, _, _)) in th.blocks.iter().enumerate() {
                let lb = &self.left[w][li];
                if lb.is_empty() {
                    continue;
                }
                let ql = th.l.q(li);
                let Some(bli) = th.l.idx(ql + self.c_l[w]) else { continue };
                let kri = th.r.idx(ql + s1 as i32 + s2 as i32).unwrap();
                let mut x: Option<Array2<f64>> = None;
                for e in ents.iter().filter(|e| e.inp == s1) {
                    let xm = x.get_or_insert_with(|| lb.dot(&th.view(v, k)));
                    let key = (e.wr, bli, e.out, s2, kri);
                    match yidx.get(&key) {
                        Some(&p) => y.get_mut(&e.wr).unwrap()[p].1.scaled_add(e.val, xm),
                        None => {
                            let list = y.entry(e.wr).or_default();
                            yidx.insert(key, list.len());
                            list.push(((bli, e.out, s2, kri), &*xm * e.val));
                        }
                    }
                }
            }
        }
        y
    }

    /// Second site and right environment applied to `v`, keyed by the
    /// middle MPO channel and `(ket left, s1, out, bra right)`.
    fn right_half(&self, v: &[f64]) -> Vec<((u32, usize, u8, u8, usize), Array2<f64>)> {
        let th = self.theta;
        let mut acc: BTreeMap<(u32, usize, u8, u8, usize), Array2<f64>> = BTreeMap::new();
        for (&wm, ents) in &self.site2 {
            for e in ents {
                for (k, &(li, s1, s2, _, _, _)) in th.blocks.iter().enumerate() {
                    if s2 != e.inp {
                        continue;
                    }
                    let ql = th.l.q(li);
                    let kri = th.r.idx(ql + s1 as i32 + s2 as i32).unwrap();
                    let rb = &self.right[e.wr as usize][kri];
                    if rb.is_empty() {
                        continue;
                    }
                    let qb = th.r.q(kri) + self.c_r[e.wr as usize];
                    let bri = th.r.idx(qb).unwrap();
                    let p = th.view(v, k).dot(&rb.t());
                    acc.entry((wm, li, s1, e.out, bri))
                        .and_modify(|a| a.scaled_add(e.val, &p))
                        .or_insert_with(|| p * e.val);
                }
            }
        }
        acc.into_iter().collect()
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let th = self.theta;
        let y = self.left_half(v);
        // second site operator
        let mut z: BTreeMap<(u32, usize, u8, u8, usize), Array2<f64>> = BTreeMap::new();
        for (wm, list) in &y {
            let Some(ents) = self.site2.get(wm) else { continue };
            for ((bli, so1, s2, kri), m) in list {
                for e in ents.iter().filter(|e| e.inp == *s2) {
                    z.entry((e.wr, *bli, *so1, e.out, *kri))
                        .and_modify(|acc| acc.scaled_add(e.val, m))
                        .or_insert_with(|| m * e.val);
                }
            }
        }
        // right environment
        let mut out = vec![0.0; th.len];
        for ((wr, bli, so1, so2, kri), m) in z {
            let rb = &self.right[wr as usize][kri];
            if rb.is_empty() {
                continue;
            }
            let Some(&k) = th.index.get(&(bli, so1, so2)) else { continue };
            let (_, _, _, r, c, o) = th.blocks[k];
            let p = m.dot(&rb.t());
            debug_assert_eq!(p.dim(), (r, c));
            for (dst, src) in out[o..o + r * c].iter_mut().zip(p.iter()) {
                *dst += src;
            }
        }
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lowest eigenpair of the local operator by restarted Lanczos from `x0`.
fn local_eigensolve(
    op: &LocalOp,
    x0: Vec<f64>,
    krylov: usize,
    restarts: usize,
    tol: f64,
) -> (f64, Vec<f64>, bool) {
    let n = x0.len();
    let mut x = x0;
    let nrm = dot(&x, &x).sqrt();
    if nrm == 0.0 {
        x = vec![1.0; n];
    }
    let nrm = dot(&x, &x).sqrt();
    x.iter_mut().for_each(|v| *v /= nrm);
    let m = krylov.min(n).max(1);
    let mut theta = f64::NAN;
    for _ in 0..=restarts {
        let mut basis: Vec<Vec<f64>> = vec![x.clone()];
        let mut t = Array2::<f64>::zeros((m, m));
        let mut size = 0;
        let mut converged = false;
        let mut best = (0.0, Array2::<f64>::zeros((1, 1)));
        for j in 0..m {
            let mut w = op.apply(&basis[j]);
            for (i, b) in basis.iter().enumerate() {
                let c = dot(b, &w);
                if i + 2 >= j + 1 {
                    t[[i, j]] = c;
                    t[[j, i]] = c;
                }
                w.iter_mut().zip(b).for_each(|(wi, bi)| *wi -= c * bi);
            }
            for b in &basis {
                let c = dot(b, &w);
                w.iter_mut().zip(b).for_each(|(wi, bi)| *wi -= c * bi);
            }
            let beta = dot(&w, &w).sqrt();
            size = j + 1;
            let (vals, vecs) = eigh(&t.slice(s![..size, ..size]).to_owned());
            let res = beta * vecs[[size - 1, 0]].abs();
            best = (vals[0], vecs);
            if res < tol || beta < 1e-14 || j + 1 == m {
                converged = res < tol || beta < 1e-14;
                break;
            }
            w.iter_mut().for_each(|v| *v /= beta);
            t[[j, j + 1]] = beta;
            t[[j + 1, j]] = beta;
            basis.push(w);
        }
        theta = best.0;
        let mut nx = vec![0.0; n];
        for (i, b) in basis.iter().take(size).enumerate() {
            let c = best.1[[i, 0]];
            nx.iter_mut().zip(b).for_each(|(xi, bi)| *xi += c * bi);
        }
        let nrm = dot(&nx, &nx).sqrt();
        nx.iter_mut().for_each(|v| *v /= nrm);
        x = nx;
        if converged {
            return (theta, x, true);
        }
    }
    (theta, x, false)
}

/// Perturbation pieces for a split: `(middle charge, group, slot, block)`.
/// For a right move the slot is a row key `(left index, s1)` and the block
/// spans that row group; for a left move it is a column key `(s2, right
/// index)`.
type Expansion = Vec<(i32, (u32, usize, u8), (usize, u8), Array2<f64>)>;

fn right_expansion(op: &LocalOp, v: &[f64]) -> Expansion {
    let th = op.theta;
    let mut out = Vec::new();
    for (wm, list) in op.left_half(v) {
        for ((bli, so1, s2, kri), m) in list {
            if th.l.dims[bli] == 0 || th.r.dims[kri] == 0 {
                continue;
            }
            out.push((th.l.q(bli) + so1 as i32, (wm, kri, s2), (bli, so1), m));
        }
    }
    out
}

fn left_expansion(op: &LocalOp, v: &[f64]) -> Expansion {
    let th = op.theta;
    let mut out = Vec::new();
    for ((wm, li, s1, so2, bri), m) in op.right_half(v) {
        if th.l.dims[li] == 0 || th.r.dims[bri] == 0 {
            continue;
        }
        out.push((th.r.q(bri) - so2 as i32, (wm, li, s1), (bri, so2), m));
    }
    out
}

/// Split a two-site vector into two site tensors, keeping at most `chi`
/// states on the middle bond. With an expansion, the kept basis comes from
/// the reduced density matrix mixed with weight `alpha` of the perturbation.
/// Returns the new tensors and the discarded weight.
#[allow(clippy::too_many_arguments)]
fn split(
    th: &Theta,
    v: &[f64],
    mid_range: (i32, i32),
    chi: usize,
    cutoff: f64,
    move_right: bool,
    expansion: Option<(&Expansion, f64)>,
) -> (BSite, BSite, f64) {
    let (lo, hi) = mid_range;
    struct Part {
        q: i32,
        rows: Vec<(usize, u8, usize)>,
        cols: Vec<(u8, usize, usize)>,
        m: Array2<f64>,
        gram: Option<Array2<f64>>,
        /// `m ~ left * right` with the moving side isometric
        left: Array2<f64>,
        right: Array2<f64>,
        w: Vec<f64>,
    }
    let mut by_q: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    if let Some((pieces, _)) = expansion {
        for (k, p) in pieces.iter().enumerate() {
            by_q.entry(p.0).or_default().push(k);
        }
    }
    let mut parts = Vec::new();
    for q in lo..=hi {
        let mut rows = Vec::new();
        let mut nr = 0;
        for s1 in 0..2u8 {
            if let Some(li) = th.l.idx(q - s1 as i32) {
                if th.l.dims[li] > 0 {
                    rows.push((li, s1, nr));
                    nr += th.l.dims[li];
                }
            }
        }
        let mut cols = Vec::new();
        let mut nc = 0;
        for s2 in 0..2u8 {
            if let Some(ri) = th.r.idx(q + s2 as i32) {
                if th.r.dims[ri] > 0 {
                    cols.push((s2, ri, nc));
                    nc += th.r.dims[ri];
                }
            }
        }
        if nr == 0 || nc == 0 {
            continue;
        }
        let mut m = Array2::zeros((nr, nc));
        for &(li, s1, ro) in &rows {
            for &(s2, ri, co) in &cols {
                if let Some(&k) = th.index.get(&(li, s1, s2)) {
                    let blk = th.view(v, k);
                    m.slice_mut(s![ro..ro + th.l.dims[li], co..co + th.r.dims[ri]])
                        .assign(&blk);
                }
            }
        }
        let gram = expansion.map(|(pieces, _)| {
            let n = if move_right { nr } else { nc };
            let mut groups: BTreeMap<(u32, usize, u8), Array2<f64>> = BTreeMap::new();
            for &k in by_q.get(&q).map(Vec::as_slice).unwrap_or(&[]) {
                let (_, g, slot, blk) = &pieces[k];
                let off = if move_right {
                    rows.iter().find(|r| (r.0, r.1) == *slot).map(|r| r.2)
                } else {
                    cols.iter().find(|c| (c.1, c.0) == *slot).map(|c| c.2)
                };
                let Some(off) = off else { continue };
                let width = if move_right { blk.ncols() } else { blk.nrows() };
                let e = groups.entry(*g).or_insert_with(|| Array2::zeros((n, width)));
                if move_right {
                    e.slice_mut(s![off..off + blk.nrows(), ..]).assign(blk);
                } else {
                    e.slice_mut(s![off..off + blk.ncols(), ..]).assign(&blk.t());
                }
            }
            let mut gsum = Array2::zeros((n, n));
            for e in groups.values() {
                gsum += &e.dot(&e.t());
            }
            gsum
        });
        parts.push(Part {
            q,
            rows,
            cols,
            m,
            gram,
            left: Array2::zeros((0, 0)),
            right: Array2::zeros((0, 0)),
            w: Vec::new(),
        });
    }
    let total: f64 = parts.iter().map(|p| p.m.iter().map(|x| x * x).sum::<f64>()).sum();
    let scale = expansion.map_or(0.0, |(_, alpha)| {
        let tr: f64 = parts
            .iter()
            .filter_map(|p| p.gram.as_ref())
            .map(|g| g.diag().sum())
            .sum();
        if tr > 0.0 {
            alpha * total / tr
        } else {
            0.0
        }
    });
    for part in parts.iter_mut() {
        match (&part.gram, scale > 0.0) {
            (Some(g), true) => {
                let rho = if move_right {
                    part.m.dot(&part.m.t()) + g * scale
                } else {
                    part.m.t().dot(&part.m) + g * scale
                };
                let (vals, vecs) = eigh(&rho);
                let n = vals.len();
                let order: Vec<usize> = (0..n).rev().collect();
                let basis = Array2::from_shape_fn((n, n), |(i, j)| vecs[[i, order[j]]]);
                part.w = order.iter().map(|&k| vals[k].max(0.0).sqrt()).collect();
                if move_right {
                    part.right = basis.t().dot(&part.m);
                    part.left = basis;
                } else {
                    part.left = part.m.dot(&basis);
                    part.right = basis.reversed_axes();
                }
            }
            _ => {
                let (u, sv, vt) = svd(&part.m);
                part.w = sv.to_vec();
                if move_right {
                    part.right = &vt * &sv.view().insert_axis(ndarray::Axis(1));
                    part.left = u;
                } else {
                    part.left = &u * &sv;
                    part.right = vt;
                }
            }
        }
    }
    let mut all: Vec<(f64, usize)> = parts
        .iter()
        .enumerate()
        .flat_map(|(p, part)| part.w.iter().map(move |&x| (x, p)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut keep = vec![0usize; parts.len()];
    for (i, &(x, p)) in all.iter().enumerate() {
        if i >= chi.max(1) || (i > 0 && x <= cutoff) {
            break;
        }
        keep[p] += 1;
    }
    let kept_weight: f64 = parts
        .iter()
        .zip(&keep)
        .map(|(p, &k)| {
            let side = if move_right {
                p.right.slice(s![..k, ..]).to_owned()
            } else {
                p.left.slice(s![.., ..k]).to_owned()
            };
            side.iter().map(|x| x * x).sum::<f64>()
        })
        .sum();
    let discarded = ((total - kept_weight) / total.max(1e-300)).max(0.0);
    let norm = kept_weight.sqrt().max(1e-300);
    let mid = Charges {
        q0: lo,
        dims: (lo..=hi)
            .map(|q| {
                parts
                    .iter()
                    .position(|p| p.q == q)
                    .map_or(0, |p| keep[p])
            })
            .collect(),
    };
    let mut a = BSite {
        l: th.l.clone(),
        r: mid.clone(),
        b: (0..th.l.dims.len())
            .map(|li| {
                let ql = th.l.q(li);
                [
                    Array2::zeros((th.l.dims[li], mid.dim(ql))),
                    Array2::zeros((th.l.dims[li], mid.dim(ql + 1))),
                ]
            })
            .collect(),
    };
    let mut b = BSite {
        l: mid.clone(),
        r: th.r.clone(),
        b: (0..mid.dims.len())
            .map(|mi| {
                let qm = mid.q(mi);
                [
                    Array2::zeros((mid.dims[mi], th.r.dim(qm))),
                    Array2::zeros((mid.dims[mi], th.r.dim(qm + 1))),
                ]
            })
            .collect(),
    };
    let (fa, fb) = if move_right { (1.0, 1.0 / norm) } else { (1.0 / norm, 1.0) };
    for (p, part) in parts.iter().enumerate() {
        let k = keep[p];
        if k == 0 {
            continue;
        }
        let mi = mid.idx(part.q).unwrap();
        for &(li, s1, ro) in &part.rows {
            let rows = th.l.dims[li];
            a.b[li][s1 as usize] = part.left.slice(s![ro..ro + rows, ..k]).to_owned() * fa;
        }
        for &(s2, ri, co) in &part.cols {
            let cols = th.r.dims[ri];
            b.b[mi][s2 as usize] = part.right.slice(s![..k, co..co + cols]).to_owned() * fb;
        }
    }
    (a, b, discarded)
}

fn chain_bits(cfg: &DualConfig) -> Vec<u8> {
    let snake = SnakeMap::new(cfg.shape());
    let bulk = cfg.bulk_bits();
    (0..bulk.len())
        .map(|t| bulk[snake.chain_to_bulk(t)] as u8)
        .collect()
}

fn export(shape: LatticeShape, st: &State) -> Mps {
    let tensors = st.sites.iter().map(BSite::to_dense).collect();
    let mut mps = Mps::from_tensors(shape, tensors).expect("consistent block tensors");
    mps.center = Some(0);
    mps
}

/// Ground state of `mpo` by two-site sweeps at fixed particle number,
/// starting from a few nearby Hamiltonian cycles dressed with random noise.
/// Early sweeps enlarge the kept basis with states the Hamiltonian couples
/// to, which lets the search leave the initial cycle.
pub fn dmrg(mpo: &Mpo, opts: &DmrgOptions) -> Result<DmrgResult> {
    let shape = mpo.shape;
    let len = mpo.len();
    if len < 2 {
        return Err(Error::Unsupported("two-site sweeps need at least two sites".into()));
    }
    if opts.chi_schedule.is_empty() || opts.chi_schedule.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Validation("chi schedule must be nonempty and nondecreasing".into()));
    }
    let seed_cfg = comb_cycle(shape)?;
    let n = match opts.particles {
        Some(n) => n,
        None => cycle_area(shape)?,
    };
    if n > len {
        return Err(Error::Validation(format!("{n} particles on {len} sites")));
    }
    let mut seeds: Vec<Vec<u8>> = cycle_cluster(seed_cfg, opts.init_cycles.max(1))
        .iter()
        .map(chain_bits)
        .collect();
    if seeds[0].iter().map(|&b| b as usize).sum::<usize>() != n {
        // a custom sector: fill the first n sites instead
        seeds = vec![(0..len).map(|t| (t < n) as u8).collect()];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut st = initial_state(len, n, &seeds, opts.init_chi, opts.init_noise, &mut rng);
    right_canonicalize(&mut st);

    let charges = &mpo.bond_charges;
    let mut lenv: Vec<Option<Env>> = vec![None; len + 1];
    let mut renv: Vec<Option<Env>> = vec![None; len + 1];
    lenv[0] = Some(env_boundary());
    renv[len] = Some(env_boundary());
    for t in (1..len).rev() {
        let e = grow_right(
            renv[t + 1].as_ref().unwrap(),
            &st.sites[t],
            &mpo.sites[t],
            &charges[t],
        );
        renv[t] = Some(e);
    }

    let mut trace = Vec::new();
    let mut energy = f64::INFINITY;
    let mut converged = false;
    let mut reached_target = false;
    let last_chi = *opts.chi_schedule.last().unwrap();
    for sweep in 0..opts.max_sweeps {
        let t0 = Instant::now();
        let chi = opts.chi_schedule[sweep.min(opts.chi_schedule.len() - 1)];
        let noise = if sweep < opts.noise_sweeps {
            opts.noise * 0.5f64.powi(sweep as i32)
        } else {
            0.0
        };
        let mut failures = 0;
        let mut worst_trunc = 0.0f64;
        let mut e_sweep = f64::NAN;
        let order: Vec<(usize, bool)> = (0..len - 1)
            .map(|t| (t, true))
            .chain((0..len - 1).rev().map(|t| (t, false)))
            .collect();
        for (t, right) in order {
            let th = Theta::new(&st.sites[t].l, &st.sites[t + 1].r);
            let v0 = th.contract(&st.sites[t], &st.sites[t + 1]);
            let op = LocalOp {
                theta: &th,
                left: lenv[t].as_ref().unwrap(),
                right: renv[t + 2].as_ref().unwrap(),
                c_l: &charges[t],
                c_r: &charges[t + 2],
                site1: group_by_wl(&mpo.sites[t]),
                site2: group_by_wl(&mpo.sites[t + 1]),
            };
            let (e, v, ok) = local_eigensolve(
                &op,
                v0,
                opts.lanczos_krylov,
                opts.lanczos_restarts,
                opts.lanczos_tol,
            );
            if !ok {
                failures += 1;
            }
            e_sweep = e;
            let mid = feasible(t + 1, len, n);
            let exp = (noise > 0.0).then(|| {
                if right {
                    right_expansion(&op, &v)
                } else {
                    left_expansion(&op, &v)
                }
            });
            let (a, b, disc) = split(
                &th,
                &v,
                mid,
                chi,
                opts.svd_cutoff,
                right,
                exp.as_ref().map(|e| (e, noise)),
            );
            worst_trunc = worst_trunc.max(disc);
            st.sites[t] = a;
            st.sites[t + 1] = b;
            if right {
                lenv[t + 1] = Some(grow_left(
                    lenv[t].as_ref().unwrap(),
                    &st.sites[t],
                    &mpo.sites[t],
                    &charges[t],
                    &charges[t + 1],
                ));
            } else {
                renv[t + 1] = Some(grow_right(
                    renv[t + 2].as_ref().unwrap(),
                    &st.sites[t + 1],
                    &mpo.sites[t + 1],
                    &charges[t + 1],
                ));
            }
        }
        let max_bond = st.sites.iter().map(|s| s.r.total()).max().unwrap_or(1);
        let rec = SweepRecord {
            sweep,
            chi,
            energy: e_sweep,
            max_bond,
            truncation: worst_trunc,
            solver_failures: failures,
            seconds: t0.elapsed().as_secs_f64(),
            count_estimate: None,
        };
        let delta = (energy - e_sweep).abs();
        energy = e_sweep;
        let mut rec = rec;
        if let Some(target) = opts.count_target {
            let mut mps = export(shape, &st);
            mps.normalize();
            let c = count_from_mps(&mps);
            rec.count_estimate = Some(c);
            reached_target = (c - target.exact).abs() < target.rel_eps * target.exact;
        }
        trace.push(rec);
        if reached_target {
            break;
        }
        if failures == 2 * (len - 1) {
            return Err(Error::NoConvergence {
                iterations: sweep + 1,
                residual: f64::NAN,
            });
        }
        if chi == last_chi && noise == 0.0 && delta < opts.energy_tol {
            converged = true;
            break;
        }
    }
    let mut mps = export(shape, &st);
    mps.normalize();
    Ok(DmrgResult {
        mps,
        energy,
        trace,
        converged,
        reached_target,
    })
}
