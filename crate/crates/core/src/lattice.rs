//! Dual-lattice geometry and classical analysis of plaquette configurations.
//!
//! An `m x n` grid of vertices has `(m+1) x (n+1)` dual plaquettes once a
//! frame ring is added around it. Frame plaquettes are always 0; the
//! `(m-1) x (n-1)` bulk plaquettes carry the configuration. A plaquette is 1
//! when it lies inside the encoded multiloop, and a grid edge is occupied
//! exactly when the two plaquettes it separates differ.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid of `m` vertex rows by `n` vertex columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeShape {
    pub m: usize,
    pub n: usize,
}

impl LatticeShape {
    pub fn new(m: usize, n: usize) -> Result<Self> {
        if m < 2 || n < 2 {
            return Err(Error::InvalidShape {
                m,
                n,
                reason: "both dimensions must be at least 2".into(),
            });
        }
        Ok(Self { m, n })
    }

    /// Shape accepted for parent-Hamiltonian work. The 2x2 grid is rejected:
    /// its only Hamiltonian cycle encloses a single plaquette and is itself a
    /// local loop, so the local-loop penalty removes it from the kernel.
    pub fn for_parent_hamiltonian(m: usize, n: usize) -> Result<Self> {
        let shape = Self::new(m, n)?;
        shape.check_parent_hamiltonian()?;
        Ok(shape)
    }

    pub fn check_parent_hamiltonian(&self) -> Result<()> {
        if self.m * self.n == 4 {
            return Err(Error::InvalidShape {
                m: self.m,
                n: self.n,
                reason: "the 2x2 cycle is a local loop; the parent Hamiltonian has no zero mode"
                    .into(),
            });
        }
        Ok(())
    }

    pub fn dual_rows(&self) -> usize {
        self.m + 1
    }

    pub fn dual_cols(&self) -> usize {
        self.n + 1
    }

    pub fn num_plaquettes(&self) -> usize {
        self.dual_rows() * self.dual_cols()
    }

    pub fn bulk_rows(&self) -> usize {
        self.m - 1
    }

    pub fn bulk_cols(&self) -> usize {
        self.n - 1
    }

    pub fn num_bulk(&self) -> usize {
        self.bulk_rows() * self.bulk_cols()
    }

    pub fn num_vertices(&self) -> usize {
        self.m * self.n
    }

    pub fn is_bulk(&self, i: usize, j: usize) -> bool {
        i >= 1 && j >= 1 && i < self.m && j < self.n
    }

    pub fn dual_index(&self, i: usize, j: usize) -> usize {
        i * self.dual_cols() + j
    }

    /// Row-major bulk position of dual plaquette `(i, j)`.
    pub fn bulk_position(&self, i: usize, j: usize) -> Option<usize> {
        self.is_bulk(i, j)
            .then(|| (i - 1) * self.bulk_cols() + (j - 1))
    }

    /// Dual coordinates of bulk position `k`.
    pub fn bulk_coords(&self, k: usize) -> (usize, usize) {
        (k / self.bulk_cols() + 1, k % self.bulk_cols() + 1)
    }

    /// Whether the shape admits any Hamiltonian cycle (at least one even side).
    pub fn admits_cycles(&self) -> bool {
        self.m % 2 == 0 || self.n % 2 == 0
    }
}

impl fmt::Display for LatticeShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.m, self.n)
    }
}

impl FromStr for LatticeShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Format(format!("shape must look like MxN, got {s:?}"));
        let (a, b) = s.trim().split_once(['x', 'X']).ok_or_else(bad)?;
        let m = a.trim().parse().map_err(|_| bad())?;
        let n = b.trim().parse().map_err(|_| bad())?;
        Self::new(m, n)
    }
}

/// Boustrophedon ordering of the bulk plaquettes used by the tensor chain.
///
/// The curve starts at the top-left bulk plaquette and runs first along the
/// shorter side of the bulk (down the first column when the bulk has no more
/// rows than columns), reversing direction on each new line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SnakeMap {
    shape: LatticeShape,
    chain_to_bulk: Vec<usize>,
    bulk_to_chain: Vec<usize>,
}

impl SnakeMap {
    pub fn new(shape: LatticeShape) -> Self {
        let (rows, cols) = (shape.bulk_rows(), shape.bulk_cols());
        let mut chain_to_bulk = Vec::with_capacity(rows * cols);
        if rows <= cols {
            for c in 0..cols {
                for k in 0..rows {
                    let r = if c % 2 == 0 { k } else { rows - 1 - k };
                    chain_to_bulk.push(r * cols + c);
                }
            }
        } else {
            for r in 0..rows {
                for k in 0..cols {
                    let c = if r % 2 == 0 { k } else { cols - 1 - k };
                    chain_to_bulk.push(r * cols + c);
                }
            }
        }
        let mut bulk_to_chain = vec![0; chain_to_bulk.len()];
        for (t, &b) in chain_to_bulk.iter().enumerate() {
            bulk_to_chain[b] = t;
        }
        Self {
            shape,
            chain_to_bulk,
            bulk_to_chain,
        }
    }

    pub fn shape(&self) -> LatticeShape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.chain_to_bulk.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chain_to_bulk.is_empty()
    }

    /// Chain position of a bulk plaquette given in dual coordinates.
    pub fn position(&self, i: usize, j: usize) -> Result<usize> {
        let k = self
            .shape
            .bulk_position(i, j)
            .ok_or(Error::FramePlaquette(i, j))?;
        Ok(self.bulk_to_chain[k])
    }

    /// Dual coordinates of chain position `t`.
    pub fn plaquette(&self, t: usize) -> (usize, usize) {
        self.shape.bulk_coords(self.chain_to_bulk[t])
    }

    pub fn chain_to_bulk(&self, t: usize) -> usize {
        self.chain_to_bulk[t]
    }

    pub fn bulk_to_chain(&self, k: usize) -> usize {
        self.bulk_to_chain[k]
    }
}

/// Convenience wrapper around [`SnakeMap::position`].
pub fn snake_index(shape: LatticeShape, i: usize, j: usize) -> Result<usize> {
    SnakeMap::new(shape).position(i, j)
}

pub type Vertex = (usize, usize);

/// Undirected grid edge with endpoints stored in lexicographic order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub a: Vertex,
    pub b: Vertex,
}

impl Edge {
    pub fn new(u: Vertex, v: Vertex) -> Self {
        if u <= v {
            Self { a: u, b: v }
        } else {
            Self { a: v, b: u }
        }
    }
}

/// Bit grid over the full dual lattice with a frozen all-zero frame.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DualConfig {
    shape: LatticeShape,
    bits: Vec<bool>,
}

impl DualConfig {
    pub fn zeros(shape: LatticeShape) -> Self {
        Self {
            shape,
            bits: vec![false; shape.num_plaquettes()],
        }
    }

    /// Build from bulk bits listed in row-major bulk order.
    pub fn from_bulk_bits(shape: LatticeShape, bulk: &[bool]) -> Result<Self> {
        if bulk.len() != shape.num_bulk() {
            return Err(Error::Validation(format!(
                "expected {} bulk bits for {shape}, got {}",
                shape.num_bulk(),
                bulk.len()
            )));
        }
        let mut cfg = Self::zeros(shape);
        for (k, &b) in bulk.iter().enumerate() {
            let (i, j) = shape.bulk_coords(k);
            cfg.bits[shape.dual_index(i, j)] = b;
        }
        Ok(cfg)
    }

    /// Bit `k` of `idx` (least significant first) is bulk position `k`.
    pub fn from_index(shape: LatticeShape, idx: u64) -> Result<Self> {
        let nb = shape.num_bulk();
        if nb < 64 && idx >> nb != 0 {
            return Err(Error::OutOfRange(format!(
                "config index {idx} >= 2^{nb} for {shape}"
            )));
        }
        if nb > 64 {
            return Self::from_big_index(shape, &BigUint::from(idx));
        }
        let bulk: Vec<bool> = (0..nb).map(|k| (idx >> k) & 1 == 1).collect();
        Self::from_bulk_bits(shape, &bulk)
    }

    pub fn from_big_index(shape: LatticeShape, idx: &BigUint) -> Result<Self> {
        let nb = shape.num_bulk();
        if idx.bits() > nb as u64 {
            return Err(Error::OutOfRange(format!(
                "config index {idx} >= 2^{nb} for {shape}"
            )));
        }
        let bulk: Vec<bool> = (0..nb as u64).map(|k| idx.bit(k)).collect();
        Self::from_bulk_bits(shape, &bulk)
    }

    pub fn shape(&self) -> LatticeShape {
        self.shape
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[self.shape.dual_index(i, j)]
    }

    /// Set a bulk plaquette; frame plaquettes cannot be changed.
    pub fn set(&mut self, i: usize, j: usize, value: bool) -> Result<()> {
        if !self.shape.is_bulk(i, j) {
            return Err(Error::FramePlaquette(i, j));
        }
        let k = self.shape.dual_index(i, j);
        self.bits[k] = value;
        Ok(())
    }

    pub fn bulk_bits(&self) -> Vec<bool> {
        (0..self.shape.num_bulk())
            .map(|k| {
                let (i, j) = self.shape.bulk_coords(k);
                self.get(i, j)
            })
            .collect()
    }

    /// Bulk index as `u64`, or `None` when the bulk has more than 64 bits.
    pub fn index(&self) -> Option<u64> {
        if self.shape.num_bulk() > 64 {
            return None;
        }
        Some(
            self.bulk_bits()
                .iter()
                .enumerate()
                .fold(0u64, |acc, (k, &b)| acc | ((b as u64) << k)),
        )
    }

    pub fn big_index(&self) -> BigUint {
        let mut idx = BigUint::zero();
        for (k, b) in self.bulk_bits().into_iter().enumerate() {
            if b {
                idx |= BigUint::one() << k;
            }
        }
        idx
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Bits of the four plaquettes around vertex `(i, j)`:
    /// `[(i,j), (i,j+1), (i+1,j), (i+1,j+1)]`.
    pub fn window(&self, i: usize, j: usize) -> [bool; 4] {
        [
            self.get(i, j),
            self.get(i, j + 1),
            self.get(i + 1, j),
            self.get(i + 1, j + 1),
        ]
    }

    /// Text grid of 0/1 characters, one dual row per line, frame included.
    pub fn to_text_grid(&self) -> String {
        let mut out = String::with_capacity(self.bits.len() + self.shape.dual_rows());
        for i in 0..self.shape.dual_rows() {
            for j in 0..self.shape.dual_cols() {
                out.push(if self.get(i, j) { '1' } else { '0' });
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text_grid(text: &str) -> Result<Self> {
        let rows: Vec<&str> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect();
        if rows.len() < 3 {
            return Err(Error::Format("grid needs at least 3 rows".into()));
        }
        let width = rows[0].len();
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::Format("ragged grid".into()));
        }
        let shape = LatticeShape::new(rows.len() - 1, width.saturating_sub(1))?;
        let mut cfg = Self::zeros(shape);
        for (i, row) in rows.iter().enumerate() {
            for (j, ch) in row.chars().enumerate() {
                let bit = match ch {
                    '0' => false,
                    '1' => true,
                    other => return Err(Error::Format(format!("unexpected character {other:?}"))),
                };
                if bit && !shape.is_bulk(i, j) {
                    return Err(Error::FramePlaquette(i, j));
                }
                cfg.bits[shape.dual_index(i, j)] = bit;
            }
        }
        Ok(cfg)
    }

    pub fn to_record(&self) -> ConfigRecord {
        ConfigRecord {
            m: self.shape.m,
            n: self.shape.n,
            bulk_index: self.big_index().to_string(),
        }
    }

    pub fn from_record(rec: &ConfigRecord) -> Result<Self> {
        let shape = LatticeShape::new(rec.m, rec.n)?;
        let idx: BigUint = rec
            .bulk_index
            .parse()
            .map_err(|_| Error::Format(format!("bad bulk index {:?}", rec.bulk_index)))?;
        Self::from_big_index(shape, &idx)
    }
}

impl fmt::Display for DualConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text_grid())
    }
}

/// Compact serialized form of a configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigRecord {
    pub m: usize,
    pub n: usize,
    pub bulk_index: String,
}

/// Range-checked alias of [`DualConfig::from_index`].
pub fn config_from_index(shape: LatticeShape, idx: u64) -> Result<DualConfig> {
    DualConfig::from_index(shape, idx)
}

/// Occupied grid edges: those separating plaquettes of different color.
pub fn extract_edges(cfg: &DualConfig) -> BTreeSet<Edge> {
    let s = cfg.shape();
    let mut edges = BTreeSet::new();
    for i in 0..s.m {
        for j in 0..s.n {
            if j + 1 < s.n && cfg.get(i, j + 1) != cfg.get(i + 1, j + 1) {
                edges.insert(Edge::new((i, j), (i, j + 1)));
            }
            if i + 1 < s.m && cfg.get(i + 1, j) != cfg.get(i + 1, j + 1) {
                edges.insert(Edge::new((i, j), (i + 1, j)));
            }
        }
    }
    edges
}

/// Constraint pattern matched by a vertex window, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Violation {
    /// All four plaquettes empty: vertex not visited.
    C1,
    /// All four plaquettes set: vertex not visited.
    C2,
    /// Anti-diagonal pair set: vertex visited twice.
    C3,
    /// Diagonal pair set: vertex visited twice.
    C4,
}

pub fn window_violation(w: [bool; 4]) -> Option<Violation> {
    match w {
        [false, false, false, false] => Some(Violation::C1),
        [true, true, true, true] => Some(Violation::C2),
        [false, true, true, false] => Some(Violation::C3),
        [true, false, false, true] => Some(Violation::C4),
        _ => None,
    }
}

/// A vertex window with one or three plaquettes set is a corner of the path.
pub fn window_is_bend(w: [bool; 4]) -> bool {
    matches!(w.iter().filter(|&&b| b).count(), 1 | 3)
}

/// Summary of the classical structure of a configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifyReport {
    pub c_violations: usize,
    pub is_two_factor: bool,
    pub num_loops: usize,
    pub local_loops: usize,
    /// Canonical containment signature; empty unless the config is a 2-factor.
    pub nesting: String,
    pub bends: usize,
}

impl ClassifyReport {
    pub fn is_hamiltonian_cycle(&self) -> bool {
        self.is_two_factor && self.num_loops == 1
    }
}

/// Number of plus-shaped single-plaquette loops (one set plaquette with four
/// empty neighbours, or the inverse) centred on bulk plaquettes.
pub fn count_local_loops(cfg: &DualConfig) -> usize {
    let s = cfg.shape();
    let mut count = 0;
    for i in 1..s.m {
        for j in 1..s.n {
            let c = cfg.get(i, j);
            let nb = [
                cfg.get(i - 1, j),
                cfg.get(i, j - 1),
                cfg.get(i, j + 1),
                cfg.get(i + 1, j),
            ];
            if nb.iter().all(|&b| b != c) {
                count += 1;
            }
        }
    }
    count
}

pub fn classify(cfg: &DualConfig) -> ClassifyReport {
    let s = cfg.shape();
    let mut c_violations = 0;
    let mut bends = 0;
    for i in 0..s.m {
        for j in 0..s.n {
            let w = cfg.window(i, j);
            if window_violation(w).is_some() {
                c_violations += 1;
            }
            if window_is_bend(w) {
                bends += 1;
            }
        }
    }
    let edges = extract_edges(cfg);
    let num_loops = edge_components(s, &edges);
    let is_two_factor = c_violations == 0;
    let nesting = if is_two_factor {
        nesting_signature(cfg)
    } else {
        String::new()
    };
    ClassifyReport {
        c_violations,
        is_two_factor,
        num_loops,
        local_loops: count_local_loops(cfg),
        nesting,
        bends,
    }
}

fn edge_components(shape: LatticeShape, edges: &BTreeSet<Edge>) -> usize {
    let nv = shape.num_vertices();
    let id = |v: Vertex| v.0 * shape.n + v.1;
    let mut parent: Vec<usize> = (0..nv).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut touched = vec![false; nv];
    for e in edges {
        let (a, b) = (id(e.a), id(e.b));
        touched[a] = true;
        touched[b] = true;
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
        }
    }
    (0..nv)
        .filter(|&v| touched[v] && find(&mut parent, v) == v)
        .count()
}

/// Canonical rooted-tree signature of loop containment.
///
/// Plaquettes are grouped into 4-connected single-colour regions; in a
/// 2-factor each loop separates exactly two regions, so regions and loops form
/// a tree rooted at the region holding the frame. Each loop contributes a
/// pair of parentheses around its children, siblings sorted, which makes the
/// string independent of where loops sit on the lattice.
pub fn nesting_signature(cfg: &DualConfig) -> String {
    let s = cfg.shape();
    let (rows, cols) = (s.dual_rows(), s.dual_cols());
    let mut region = vec![usize::MAX; rows * cols];
    let mut nreg = 0;
    for start in 0..rows * cols {
        if region[start] != usize::MAX {
            continue;
        }
        let color = cfg.bits[start];
        region[start] = nreg;
        let mut queue = VecDeque::from([start]);
        while let Some(p) = queue.pop_front() {
            let (i, j) = (p / cols, p % cols);
            let mut visit = |q: usize| {
                if region[q] == usize::MAX && cfg.bits[q] == color {
                    region[q] = nreg;
                    queue.push_back(q);
                }
            };
            if i > 0 {
                visit(p - cols);
            }
            if i + 1 < rows {
                visit(p + cols);
            }
            if j > 0 {
                visit(p - 1);
            }
            if j + 1 < cols {
                visit(p + 1);
            }
        }
        nreg += 1;
    }
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); nreg];
    for i in 0..rows {
        for j in 0..cols {
            let p = i * cols + j;
            if j + 1 < cols && region[p] != region[p + 1] {
                adj[region[p]].insert(region[p + 1]);
                adj[region[p + 1]].insert(region[p]);
            }
            if i + 1 < rows && region[p] != region[p + cols] {
                adj[region[p]].insert(region[p + cols]);
                adj[region[p + cols]].insert(region[p]);
            }
        }
    }
    fn sig(node: usize, parent: usize, adj: &[BTreeSet<usize>]) -> String {
        let mut kids: Vec<String> = adj[node]
            .iter()
            .filter(|&&c| c != parent)
            .map(|&c| sig(c, node, adj))
            .collect();
        kids.sort();
        format!("({})", kids.concat())
    }
    let root = region[0];
    let mut kids: Vec<String> = adj[root]
        .iter()
        .map(|&c| sig(c, root, &adj))
        .collect();
    kids.sort();
    kids.concat()
}

/// Bend count obtained by walking every loop of a 2-factor and counting
/// direction changes. Returns `None` if some vertex does not have degree 0 or 2.
pub fn bends_by_walk(cfg: &DualConfig) -> Option<usize> {
    let s = cfg.shape();
    let edges = extract_edges(cfg);
    let mut nbrs: Vec<Vec<Vertex>> = vec![Vec::new(); s.num_vertices()];
    let id = |v: Vertex| v.0 * s.n + v.1;
    for e in &edges {
        nbrs[id(e.a)].push(e.b);
        nbrs[id(e.b)].push(e.a);
    }
    if nbrs.iter().any(|l| !(l.is_empty() || l.len() == 2)) {
        return None;
    }
    let mut seen = vec![false; s.num_vertices()];
    let mut bends = 0;
    for start in 0..s.num_vertices() {
        if seen[start] || nbrs[start].is_empty() {
            continue;
        }
        let v0 = (start / s.n, start % s.n);
        let mut prev = v0;
        let mut cur = nbrs[start][0];
        seen[start] = true;
        loop {
            let ci = id(cur);
            seen[ci] = true;
            let next = if nbrs[ci][0] == prev {
                nbrs[ci][1]
            } else {
                nbrs[ci][0]
            };
            let d_in = (cur.0 as isize - prev.0 as isize, cur.1 as isize - prev.1 as isize);
            let d_out = (next.0 as isize - cur.0 as isize, next.1 as isize - cur.1 as isize);
            if d_in != d_out {
                bends += 1;
            }
            if cur == v0 {
                break;
            }
            prev = cur;
            cur = next;
        }
    }
    Some(bends)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(m: usize, n: usize) -> LatticeShape {
        LatticeShape::new(m, n).unwrap()
    }

    #[test]
    fn index_zero_and_all_ones() {
        let s = shape(4, 4);
        let zero = config_from_index(s, 0).unwrap();
        assert_eq!(zero.popcount(), 0);
        let full = config_from_index(s, 511).unwrap();
        assert_eq!(full.popcount(), 9);
        assert!(full.bulk_bits().iter().all(|&b| b));
        assert!(config_from_index(s, 512).is_err());
    }

    #[test]
    fn perimeter_of_2x4() {
        let s = shape(2, 4);
        let cfg = config_from_index(s, 7).unwrap();
        let edges = extract_edges(&cfg);
        assert_eq!(edges.len(), 8);
        let expected: BTreeSet<Edge> = [
            ((0, 0), (0, 1)),
            ((0, 1), (0, 2)),
            ((0, 2), (0, 3)),
            ((1, 0), (1, 1)),
            ((1, 1), (1, 2)),
            ((1, 2), (1, 3)),
            ((0, 0), (1, 0)),
            ((0, 3), (1, 3)),
        ]
        .into_iter()
        .map(|(a, b)| Edge::new(a, b))
        .collect();
        assert_eq!(edges, expected);
        let rep = classify(&cfg);
        assert_eq!(rep.c_violations, 0);
        assert_eq!(rep.num_loops, 1);
        assert_eq!(rep.local_loops, 0);
        assert_eq!(rep.bends, 4);
        assert_eq!(rep.nesting, "()");
        assert!(rep.is_hamiltonian_cycle());
    }

    #[test]
    fn empty_and_full_4x4() {
        let s = shape(4, 4);
        let zero = DualConfig::zeros(s);
        assert!(extract_edges(&zero).is_empty());
        let rep = classify(&zero);
        assert_eq!(rep.c_violations, 16);
        assert!(!rep.is_two_factor);

        let full = config_from_index(s, 511).unwrap();
        assert_eq!(extract_edges(&full).len(), 12);
        assert_eq!(classify(&full).c_violations, 4);
    }

    #[test]
    fn nested_rings_signature() {
        // outer perimeter plus a unit loop around the centre plaquette
        let s = shape(4, 4);
        let bulk = [true, true, true, true, false, true, true, true, true];
        let cfg = DualConfig::from_bulk_bits(s, &bulk).unwrap();
        let rep = classify(&cfg);
        assert!(rep.is_two_factor);
        assert_eq!(rep.num_loops, 2);
        assert_eq!(rep.nesting, "(())");
        assert_eq!(rep.local_loops, 1);

        let sides = [true, true, true, false, false, false, true, true, true];
        let rep = classify(&DualConfig::from_bulk_bits(s, &sides).unwrap());
        assert!(rep.is_two_factor);
        assert_eq!(rep.nesting, "()()");
        assert_eq!(rep.local_loops, 0);
    }

    #[test]
    fn snake_examples() {
        let s = shape(6, 10);
        let snake = SnakeMap::new(s);
        assert_eq!(snake.position(1, 1).unwrap(), 0);
        for t in 0..snake.len() - 1 {
            let (a, b) = (snake.plaquette(t), snake.plaquette(t + 1));
            let d = a.0.abs_diff(b.0) + a.1.abs_diff(b.1);
            assert_eq!(d, 1, "positions {t} and {}", t + 1);
        }
        // first leg runs down the shorter (vertical) side
        assert_eq!(snake.plaquette(4), (5, 1));
        assert_eq!(snake.plaquette(5), (5, 2));

        let sq = SnakeMap::new(shape(4, 4));
        assert_eq!(sq.plaquette(8), (3, 3));
        assert!(matches!(sq.position(0, 2), Err(Error::FramePlaquette(0, 2))));
    }

    #[test]
    fn text_and_record_round_trip() {
        let s = shape(4, 6);
        let cfg = config_from_index(s, 0b101_1100_1101_0110).unwrap();
        let grid = cfg.to_text_grid();
        assert_eq!(DualConfig::from_text_grid(&grid).unwrap(), cfg);
        let rec = cfg.to_record();
        let json = serde_json::to_string(&rec).unwrap();
        let back: ConfigRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(DualConfig::from_record(&back).unwrap(), cfg);
        assert!(DualConfig::from_text_grid("000\n010\n000\n001\n").is_err());
    }

    #[test]
    fn shape_parsing_and_two_by_two() {
        let s: LatticeShape = "6x8".parse().unwrap();
        assert_eq!((s.m, s.n), (6, 8));
        assert!("6-8".parse::<LatticeShape>().is_err());
        assert!(LatticeShape::for_parent_hamiltonian(2, 2).is_err());
        assert!(LatticeShape::for_parent_hamiltonian(2, 3).is_ok());
    }

    #[test]
    fn no_cycles_on_odd_by_odd() {
        let s = shape(3, 3);
        for idx in 0..16 {
            let rep = classify(&config_from_index(s, idx).unwrap());
            assert!(!rep.is_hamiltonian_cycle());
        }
    }

    #[test]
    fn bends_agree_with_walk_on_4x4() {
        let s = shape(4, 4);
        let mut two_factors = 0;
        for idx in 0..512 {
            let cfg = config_from_index(s, idx).unwrap();
            let rep = classify(&cfg);
            if rep.is_two_factor {
                two_factors += 1;
                assert_eq!(bends_by_walk(&cfg), Some(rep.bends));
                for e in extract_edges(&cfg) {
                    assert!(e.a.0 < s.m && e.b.1 < s.n);
                }
            }
        }
        assert!(two_factors > 6);
    }
}
