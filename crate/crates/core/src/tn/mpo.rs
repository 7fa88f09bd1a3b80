//! Matrix product operator of the parent Hamiltonian on the snake chain.
//!
//! Every local term is a product of single-site projectors and ladder
//! operators. The terms are first laid out as a prefix automaton (one channel
//! per distinct left part still in progress), then compressed by a pair of
//! charge-blocked SVD sweeps.

use std::collections::{BTreeMap, HashMap};

use ndarray::{Array2, Array4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{code_violates, vertex_windows};
use crate::lattice::{LatticeShape, SnakeMap};
use crate::linalg::svd;
use crate::rules::local_moves;

/// Single-site operators, acting on the occupation basis `{|0>, |1>}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SiteOp {
    Id,
    P0,
    P1,
    /// `|1><0|`
    Raise,
    /// `|0><1|`
    Lower,
}

impl SiteOp {
    /// Matrix element `<out|op|in>`.
    pub fn elem(self, out: usize, inp: usize) -> f64 {
        let hit = match self {
            SiteOp::Id => out == inp,
            SiteOp::P0 => out == 0 && inp == 0,
            SiteOp::P1 => out == 1 && inp == 1,
            SiteOp::Raise => out == 1 && inp == 0,
            SiteOp::Lower => out == 0 && inp == 1,
        };
        hit as u8 as f64
    }

    pub fn charge(self) -> i32 {
        match self {
            SiteOp::Raise => 1,
            SiteOp::Lower => -1,
            _ => 0,
        }
    }

    fn projector(bit: bool) -> SiteOp {
        if bit {
            SiteOp::P1
        } else {
            SiteOp::P0
        }
    }
}

/// `coeff` times a product of site operators (identity elsewhere), with
/// chain positions strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductTerm {
    pub coeff: f64,
    pub ops: Vec<(usize, SiteOp)>,
}

impl ProductTerm {
    fn new(coeff: f64, mut ops: Vec<(usize, SiteOp)>) -> Self {
        ops.sort_by_key(|&(t, _)| t);
        ProductTerm { coeff, ops }
    }
}

/// Product-term expansion of the constraint, local-loop and rewrite pieces,
/// indexed by chain position.
pub fn hhc_terms(shape: LatticeShape) -> Result<Vec<ProductTerm>> {
    shape.check_parent_hamiltonian()?;
    let snake = SnakeMap::new(shape);
    let chain = |k: usize| snake.bulk_to_chain(k);
    let mut terms = Vec::new();
    for (_, window) in vertex_windows(shape) {
        'code: for code in 0u8..16 {
            if !code_violates(code) {
                continue;
            }
            let mut ops = Vec::new();
            for (k, p) in window.iter().enumerate() {
                let bit = (code >> k) & 1 == 1;
                match p {
                    Some(p) => ops.push((chain(*p), SiteOp::projector(bit))),
                    None if bit => continue 'code,
                    None => {}
                }
            }
            terms.push(ProductTerm::new(1.0, ops));
        }
    }
    for i in 1..shape.m {
        for j in 1..shape.n {
            let centre = chain(shape.bulk_position(i, j).unwrap());
            let nb: Vec<Option<usize>> = [(i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)]
                .iter()
                .map(|&(a, b)| shape.bulk_position(a, b).map(chain))
                .collect();
            let mut l1 = vec![(centre, SiteOp::P1)];
            l1.extend(nb.iter().flatten().map(|&t| (t, SiteOp::P0)));
            terms.push(ProductTerm::new(1.0, l1));
            if nb.iter().all(Option::is_some) {
                let mut l2 = vec![(centre, SiteOp::P0)];
                l2.extend(nb.iter().flatten().map(|&t| (t, SiteOp::P1)));
                terms.push(ProductTerm::new(1.0, l2));
            }
        }
    }
    for mv in local_moves(shape) {
        let ctx: Vec<(usize, SiteOp)> = mv
            .fixed
            .iter()
            .map(|&(k, b)| (chain(k), SiteOp::projector(b)))
            .collect();
        let (s, t) = (chain(mv.source), chain(mv.target));
        for (coeff, os, ot) in [
            (1.0, SiteOp::P1, SiteOp::P0),
            (1.0, SiteOp::P0, SiteOp::P1),
            (-1.0, SiteOp::Lower, SiteOp::Raise),
            (-1.0, SiteOp::Raise, SiteOp::Lower),
        ] {
            let mut ops = ctx.clone();
            ops.push((s, os));
            ops.push((t, ot));
            terms.push(ProductTerm::new(coeff, ops));
        }
    }
    Ok(terms)
}

/// One nonzero `W[wl, out, in, wr]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpoEntry {
    pub wl: u32,
    pub wr: u32,
    pub out: u8,
    pub inp: u8,
    pub val: f64,
}

/// Charge-conserving MPO. The charge of a channel is the net number of
/// particles its left part adds to the ket, so every entry satisfies
/// `charge(wr) = charge(wl) + out - in`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mpo {
    pub shape: LatticeShape,
    /// `bond_charges[b]` lists the channel charges on bond `b` (`0..=len`).
    pub bond_charges: Vec<Vec<i32>>,
    pub sites: Vec<Vec<MpoEntry>>,
    /// Largest singular value dropped during compression, relative to the
    /// largest kept on the same bond.
    pub truncation: f64,
}

impl Mpo {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        self.bond_charges.iter().map(Vec::len).collect()
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(0)
    }

    /// Dense matrix in the bulk-index basis (bit `k` = bulk position `k`).
    pub fn to_dense(&self) -> Result<Array2<f64>> {
        let n = self.len();
        if n > 12 {
            return Err(Error::ResourceLimit {
                what: "sites for dense MPO expansion",
                limit: 12,
                requested: n,
            });
        }
        // acc[(out_bits, in_bits)][w] over the chain prefix
        let mut acc: Vec<Vec<f64>> = vec![vec![1.0]];
        for (t, site) in self.sites.iter().enumerate() {
            let dr = self.bond_charges[t + 1].len();
            let prefix = 1usize << t;
            let mut next = vec![vec![0.0; dr]; prefix * prefix * 4];
            for (idx, row) in acc.iter().enumerate() {
                let (o, i) = (idx / prefix, idx % prefix);
                for e in site {
                    let v = row[e.wl as usize];
                    if v == 0.0 {
                        continue;
                    }
                    let o2 = o | ((e.out as usize) << t);
                    let i2 = i | ((e.inp as usize) << t);
                    next[o2 * (prefix * 2) + i2][e.wr as usize] += v * e.val;
                }
            }
            acc = next;
        }
        let snake = SnakeMap::new(self.shape);
        let dim = 1usize << n;
        let to_bulk = |chain_bits: usize| {
            (0..n).fold(0usize, |x, t| x | ((chain_bits >> t) & 1) << snake.chain_to_bulk(t))
        };
        let mut out = Array2::zeros((dim, dim));
        for (idx, row) in acc.iter().enumerate() {
            out[[to_bulk(idx / dim), to_bulk(idx % dim)]] = row[0];
        }
        Ok(out)
    }
}

/// Prefix automaton: channel 0 of each inner bond means "nothing placed
/// yet", channel 1 "term finished"; the rest are distinct left parts.
fn automaton(len: usize, terms: &[ProductTerm]) -> (Vec<Vec<i32>>, Vec<Vec<MpoEntry>>) {
    const START: u32 = 0;
    type Prefix = Vec<(usize, SiteOp)>;
    let mut bond_nodes: Vec<HashMap<Prefix, u32>> = vec![HashMap::new(); len + 1];
    let mut bond_charges: Vec<Vec<i32>> = vec![Vec::new(); len + 1];
    bond_charges[0] = vec![0];
    bond_charges[len] = vec![0];
    for b in 1..len {
        bond_charges[b] = vec![0, 0];
    }
    let done = |b: usize| if b == len { 0u32 } else { 1u32 };
    let mut node = |b: usize, p: &Prefix, charges: &mut Vec<Vec<i32>>| -> u32 {
        let next = charges[b].len() as u32;
        *bond_nodes[b].entry(p.clone()).or_insert_with(|| {
            charges[b].push(p.iter().map(|&(_, o)| o.charge()).sum());
            next
        })
    };
    let mut raw: Vec<BTreeMap<(u32, u32, SiteOp), f64>> = vec![BTreeMap::new(); len];
    for t in 0..len {
        if t + 1 < len {
            raw[t].insert((START, START, SiteOp::Id), 1.0);
        }
        if t > 0 {
            raw[t].insert((done(t), done(t + 1), SiteOp::Id), 1.0);
        }
    }
    for term in terms {
        let first = term.ops[0].0;
        let last = term.ops.last().unwrap().0;
        let mut wl = START;
        let mut prefix: Prefix = Vec::new();
        let mut k = 0;
        for t in first..=last {
            let op = if term.ops[k].0 == t {
                k += 1;
                term.ops[k - 1].1
            } else {
                SiteOp::Id
            };
            if t == last {
                *raw[t].entry((wl, done(t + 1), op)).or_insert(0.0) += term.coeff;
            } else {
                if op != SiteOp::Id {
                    prefix.push((t, op));
                }
                let wr = node(t + 1, &prefix, &mut bond_charges);
                raw[t].insert((wl, wr, op), 1.0);
                wl = wr;
            }
        }
    }
    merge_suffixes(&mut bond_charges, &mut raw);
    let sites = raw
        .into_iter()
        .map(|m| {
            let mut v = Vec::new();
            for ((wl, wr, op), c) in m {
                for out in 0..2u8 {
                    for inp in 0..2u8 {
                        let e = op.elem(out as usize, inp as usize);
                        if e != 0.0 && c != 0.0 {
                            v.push(MpoEntry {
                                wl,
                                wr,
                                out,
                                inp,
                                val: c * e,
                            });
                        }
                    }
                }
            }
            v
        })
        .collect();
    (bond_charges, sites)
}

/// Merge channels whose right continuations are identical, sweeping from
/// the right end. Exact; keeps entries sparse.
fn merge_suffixes(charges: &mut [Vec<i32>], raw: &mut [BTreeMap<(u32, u32, SiteOp), f64>]) {
    for t in (1..raw.len()).rev() {
        let mut sig: BTreeMap<u32, Vec<(u32, SiteOp, u64)>> = BTreeMap::new();
        for (&(wl, wr, op), &c) in raw[t].iter() {
            sig.entry(wl).or_default().push((wr, op, c.to_bits()));
        }
        let mut classes: HashMap<Vec<(u32, SiteOp, u64)>, u32> = HashMap::new();
        let mut class_of = vec![u32::MAX; charges[t].len()];
        let mut new_charges = Vec::new();
        for (w, sg) in sig {
            let next = classes.len() as u32;
            let c = *classes.entry(sg).or_insert_with(|| {
                new_charges.push(charges[t][w as usize]);
                next
            });
            class_of[w as usize] = c;
        }
        raw[t] = std::mem::take(&mut raw[t])
            .into_iter()
            .map(|((wl, wr, op), c)| ((class_of[wl as usize], wr, op), c))
            .collect();
        let mut prev: BTreeMap<(u32, u32, SiteOp), f64> = BTreeMap::new();
        for ((wl, wr, op), c) in std::mem::take(&mut raw[t - 1]) {
            let cls = class_of[wr as usize];
            if cls != u32::MAX {
                *prev.entry((wl, cls, op)).or_insert(0.0) += c;
            }
        }
        prev.retain(|_, c| *c != 0.0);
        raw[t - 1] = prev;
        charges[t] = new_charges;
    }
}

fn dense_site(entries: &[MpoEntry], dl: usize, dr: usize) -> Array4<f64> {
    let mut w = Array4::zeros((dl, 2, 2, dr));
    for e in entries {
        w[[e.wl as usize, e.out as usize, e.inp as usize, e.wr as usize]] += e.val;
    }
    w
}

fn sparse_site(w: &Array4<f64>) -> Vec<MpoEntry> {
    let scale = w.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
    let mut out = Vec::new();
    for ((wl, o, i, wr), &v) in w.indexed_iter() {
        if v.abs() > 1e-15 * scale {
            out.push(MpoEntry {
                wl: wl as u32,
                wr: wr as u32,
                out: o as u8,
                inp: i as u8,
                val: v,
            });
        }
    }
    out
}

/// Group indices by charge, keeping their original order.
fn by_charge(charges: impl Iterator<Item = i32>) -> BTreeMap<i32, Vec<usize>> {
    let mut m: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (k, q) in charges.enumerate() {
        m.entry(q).or_default().push(k);
    }
    m
}

/// Sweep left to right: split each site as `U * (S V^T)` per charge block,
/// dropping only numerically zero singular values, and push the remainder
/// into the next site.
fn left_sweep(charges: &mut [Vec<i32>], ws: &mut [Array4<f64>]) {
    for t in 0..ws.len() - 1 {
        left_step(charges, ws, t);
    }
}

fn left_step(charges: &mut [Vec<i32>], ws: &mut [Array4<f64>], t: usize) {
    {
        let w = &ws[t];
        let (dl, _, _, dr) = w.dim();
        let rows: Vec<(usize, usize, usize)> = (0..dl)
            .flat_map(|a| (0..2).flat_map(move |o| (0..2).map(move |i| (a, o, i))))
            .collect();
        let row_groups = by_charge(
            rows.iter()
                .map(|&(a, o, i)| charges[t][a] + o as i32 - i as i32),
        );
        let col_groups = by_charge(charges[t + 1].iter().copied());
        let mut new_charges = Vec::new();
        let mut u_cols: Vec<(Vec<(usize, f64)>, i32)> = Vec::new();
        let mut carry_rows: Vec<Vec<(usize, f64)>> = Vec::new();
        for (q, cols) in &col_groups {
            let Some(rs) = row_groups.get(q) else { continue };
            let m = Array2::from_shape_fn((rs.len(), cols.len()), |(r, c)| {
                let (a, o, i) = rows[rs[r]];
                w[[a, o, i, cols[c]]]
            });
            let (u, s, vt) = svd(&m);
            let smax = s.iter().fold(0.0f64, |a, &x| a.max(x));
            for k in 0..s.len() {
                if s[k] <= 1e-14 * smax || s[k] == 0.0 {
                    continue;
                }
                new_charges.push(*q);
                u_cols.push(((0..rs.len()).map(|r| (rs[r], u[[r, k]])).collect(), *q));
                carry_rows.push((0..cols.len()).map(|c| (cols[c], s[k] * vt[[k, c]])).collect());
            }
        }
        let nd = new_charges.len();
        let mut nu = Array4::zeros((dl, 2, 2, nd));
        for (k, (col, _)) in u_cols.iter().enumerate() {
            for &(r, v) in col {
                let (a, o, i) = rows[r];
                nu[[a, o, i, k]] = v;
            }
        }
        let mut carry: Array2<f64> = Array2::zeros((nd, dr));
        for (k, row) in carry_rows.iter().enumerate() {
            for &(c, v) in row {
                carry[[k, c]] = v;
            }
        }
        ws[t] = nu;
        let next = &ws[t + 1];
        let (_, _, _, dr2) = next.dim();
        let mut merged = Array4::zeros((nd, 2, 2, dr2));
        for o in 0..2 {
            for i in 0..2 {
                let slice = next.slice(ndarray::s![.., o, i, ..]);
                let prod = carry.dot(&slice);
                merged.slice_mut(ndarray::s![.., o, i, ..]).assign(&prod);
            }
        }
        ws[t + 1] = merged;
        charges[t + 1] = new_charges;
    }
}

/// Sweep right to left with truncation at `tol` relative to the largest
/// singular value on each bond. Returns the largest relative value dropped.
fn right_sweep(charges: &mut [Vec<i32>], ws: &mut [Array4<f64>], tol: f64) -> f64 {
    let len = ws.len();
    let mut worst = 0.0f64;
    for t in (1..len).rev() {
        let w = &ws[t];
        let (dl, _, _, _) = w.dim();
        let dr = w.dim().3;
        let cols: Vec<(usize, usize, usize)> = (0..2)
            .flat_map(|o| (0..2).flat_map(move |i| (0..dr).map(move |b| (o, i, b))))
            .collect();
        let col_groups = by_charge(
            cols.iter()
                .map(|&(o, i, b)| charges[t + 1][b] - o as i32 + i as i32),
        );
        let row_groups = by_charge(charges[t].iter().copied());
        let mut blocks = Vec::new();
        let mut smax = 0.0f64;
        for (q, rs) in &row_groups {
            let Some(cs) = col_groups.get(q) else { continue };
            let m = Array2::from_shape_fn((rs.len(), cs.len()), |(r, c)| {
                let (o, i, b) = cols[cs[c]];
                w[[rs[r], o, i, b]]
            });
            let (u, s, vt) = svd(&m);
            smax = s.iter().fold(smax, |a, &x| a.max(x));
            blocks.push((*q, rs.clone(), cs.clone(), u, s, vt));
        }
        let mut new_charges = Vec::new();
        let mut v_rows: Vec<Vec<(usize, f64)>> = Vec::new();
        let mut carry_cols: Vec<Vec<(usize, f64)>> = Vec::new();
        for (q, rs, cs, u, s, vt) in &blocks {
            for k in 0..s.len() {
                if s[k] <= tol * smax {
                    worst = worst.max(s[k] / smax.max(f64::MIN_POSITIVE));
                    continue;
                }
                new_charges.push(*q);
                v_rows.push((0..cs.len()).map(|c| (cs[c], vt[[k, c]])).collect());
                carry_cols.push((0..rs.len()).map(|r| (rs[r], u[[r, k]] * s[k])).collect());
            }
        }
        let nd = new_charges.len();
        let mut nv = Array4::zeros((nd, 2, 2, dr));
        for (k, row) in v_rows.iter().enumerate() {
            for &(c, v) in row {
                let (o, i, b) = cols[c];
                nv[[k, o, i, b]] = v;
            }
        }
        let mut carry: Array2<f64> = Array2::zeros((dl, nd));
        for (k, col) in carry_cols.iter().enumerate() {
            for &(r, v) in col {
                carry[[r, k]] = v;
            }
        }
        ws[t] = nv;
        let prev = &ws[t - 1];
        let (dl0, _, _, _) = prev.dim();
        let mut merged = Array4::zeros((dl0, 2, 2, nd));
        for o in 0..2usize {
            for i in 0..2usize {
                let slice = prev.slice(ndarray::s![.., o, i, ..]);
                let prod = slice.dot(&carry);
                merged.slice_mut(ndarray::s![.., o, i, ..]).assign(&prod);
            }
        }
        ws[t - 1] = merged;
        charges[t] = new_charges;
    }
    worst
}

/// Build and compress an MPO from product terms on a chain of `len` sites.
pub fn mpo_from_terms(
    shape: LatticeShape,
    len: usize,
    terms: &[ProductTerm],
    tol: f64,
) -> Result<Mpo> {
    if len == 0 || terms.is_empty() {
        return Err(Error::Validation("MPO needs at least one site and term".into()));
    }
    let (mut charges, raw) = automaton(len, terms);
    let mut ws: Vec<Array4<f64>> = raw
        .iter()
        .enumerate()
        .map(|(t, e)| dense_site(e, charges[t].len(), charges[t + 1].len()))
        .collect();
    let truncation = if len > 1 {
        left_sweep(&mut charges, &mut ws);
        right_sweep(&mut charges, &mut ws, tol)
    } else {
        0.0
    };
    Ok(Mpo {
        shape,
        sites: ws.iter().map(sparse_site).collect(),
        bond_charges: charges,
        truncation,
    })
}

/// Exact MPO from product terms without SVD compression. Bond dimensions
/// are larger than after compression but each channel carries only a few
/// entries, which makes sweeps much cheaper.
pub fn sparse_mpo_from_terms(shape: LatticeShape, len: usize, terms: &[ProductTerm]) -> Result<Mpo> {
    if len == 0 || terms.is_empty() {
        return Err(Error::Validation("MPO needs at least one site and term".into()));
    }
    let (bond_charges, sites) = automaton(len, terms);
    Ok(Mpo {
        shape,
        sites,
        bond_charges,
        truncation: 0.0,
    })
}

/// Sparse exact MPO of the full parent Hamiltonian.
pub fn build_mpo_hhc_sparse(shape: LatticeShape) -> Result<Mpo> {
    let terms = hhc_terms(shape)?;
    sparse_mpo_from_terms(shape, shape.num_bulk(), &terms)
}

/// MPO of the full parent Hamiltonian; singular values below `tol` times the
/// largest on each bond are dropped.
pub fn build_mpo_hhc(shape: LatticeShape, tol: f64) -> Result<Mpo> {
    let terms = hhc_terms(shape)?;
    mpo_from_terms(shape, shape.num_bulk(), &terms, tol)
}
