//! Sequence dressing of cycle configurations, simulated on a sparse map of
//! basis terms, and the heteropolymer partition function over the result.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::count::enumerate_cycles;
use crate::error::{Error, Result};
use crate::lattice::{extract_edges, DualConfig, LatticeShape, Vertex};

pub const DRESSED_CSV_SCHEMA: &str = "hamcycle-dressed/1";

const EMPTY: u8 = 0;
const TERMINAL: u8 = 1;
/// Placed by the W layer, turned into the current monomer by the V layer.
const FRESH: u8 = 2;
const FIRST_MONOMER: u8 = 3;

/// Monomer sequence over a user alphabet of single characters. `t` and `ε`
/// are reserved.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChemicalSequence {
    pub alphabet: Vec<char>,
    pub symbols: Vec<char>,
}

impl ChemicalSequence {
    pub fn parse(text: &str) -> Result<Self> {
        let symbols: Vec<char> = text.trim().chars().collect();
        if symbols.is_empty() {
            return Err(Error::Validation("empty monomer sequence".into()));
        }
        for &c in &symbols {
            if c == 't' || c == 'ε' || c.is_whitespace() || c == ',' {
                return Err(Error::Validation(format!("reserved or invalid symbol {c:?}")));
            }
        }
        let alphabet: BTreeSet<char> = symbols.iter().copied().collect();
        if alphabet.len() > (u8::MAX - FIRST_MONOMER) as usize {
            return Err(Error::Validation("alphabet too large".into()));
        }
        Ok(Self {
            alphabet: alphabet.into_iter().collect(),
            symbols,
        })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    fn code(&self, l: usize) -> u8 {
        let k = self.alphabet.binary_search(&self.symbols[l]).unwrap();
        FIRST_MONOMER + k as u8
    }

    fn char_of(&self, code: u8) -> char {
        match code {
            EMPTY => 'ε',
            TERMINAL => 't',
            FRESH => '*',
            c => self.alphabet[(c - FIRST_MONOMER) as usize],
        }
    }
}

impl std::fmt::Display for ChemicalSequence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.symbols.iter().try_for_each(|c| write!(f, "{c}"))
    }
}

/// One basis term of the dressed state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DressedTerm {
    /// Index into [`DressedEnsemble::cycles`].
    pub cycle: usize,
    /// Vertex carrying the first monomer.
    pub start: Vertex,
    /// +1 if the sequence follows the cycle's reference walk, -1 otherwise.
    pub orientation: i8,
    /// Monomer at each vertex, row-major.
    pub symbols: String,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DressedEnsemble {
    pub shape: LatticeShape,
    pub sequence: ChemicalSequence,
    /// Bulk-bit indices of the cycles.
    pub cycles: Vec<String>,
    pub terms: Vec<DressedTerm>,
    /// Squared norm of the term map after each layer, starting with the
    /// initial state.
    pub layer_norms: Vec<f64>,
    /// Number of (configuration, assignment) keys after merging terms that
    /// coincide because of repeated symbols.
    pub distinct_terms: usize,
    /// `1/sqrt(2 m n |X|)`, one term per start and orientation.
    pub amplitude_two_orientations: f64,
    /// `1/sqrt(m n |X|)`, one term per start only.
    pub amplitude_placements_only: f64,
}

impl DressedEnsemble {
    pub fn total_weight(&self) -> f64 {
        self.terms.iter().map(|t| t.amplitude * t.amplitude).sum()
    }

    /// Terms keyed by (cycle, assignment), with coinciding terms combined by
    /// adding squared amplitudes.
    pub fn merged(&self) -> BTreeMap<(usize, String), f64> {
        let mut out: BTreeMap<(usize, String), f64> = BTreeMap::new();
        for t in &self.terms {
            *out.entry((t.cycle, t.symbols.clone())).or_default() += t.amplitude * t.amplitude;
        }
        out.values_mut().for_each(|w| *w = w.sqrt());
        out
    }
}

/// Cycle vertices in walk order, starting at `(0, 0)` and stepping first to
/// its smaller neighbour.
pub fn cycle_walk(cfg: &DualConfig) -> Result<Vec<Vertex>> {
    let nbrs = neighbours(cfg)?;
    let s = cfg.shape();
    let mut order = Vec::with_capacity(s.num_vertices());
    let (mut prev, mut cur) = (0usize, nbrs[0][0]);
    order.push((0, 0));
    while cur != 0 {
        order.push((cur / s.n, cur % s.n));
        let next = if nbrs[cur][0] == prev { nbrs[cur][1] } else { nbrs[cur][0] };
        prev = cur;
        cur = next;
    }
    if order.len() != s.num_vertices() {
        return Err(Error::Validation(format!("{} is not a Hamiltonian cycle", s)));
    }
    Ok(order)
}

fn neighbours(cfg: &DualConfig) -> Result<Vec<[usize; 2]>> {
    let s = cfg.shape();
    let mut lists: Vec<Vec<usize>> = vec![Vec::new(); s.num_vertices()];
    for e in extract_edges(cfg) {
        let (a, b) = (e.a.0 * s.n + e.a.1, e.b.0 * s.n + e.b.1);
        lists[a].push(b);
        lists[b].push(a);
    }
    lists
        .into_iter()
        .map(|mut l| {
            l.sort_unstable();
            match l[..] {
                [a, b] => Ok([a, b]),
                _ => Err(Error::Validation("configuration is not a 2-factor".into())),
            }
        })
        .collect()
}

#[derive(Clone)]
struct Term {
    cycle: usize,
    start: usize,
    /// Vertex that received the terminal in the K/M layer.
    tail: usize,
    sym: Vec<u8>,
    amp: f64,
}

fn stuck(layer: &str, t: &Term) -> Error {
    Error::Validation(format!("stuck term in {layer} layer (cycle {})", t.cycle))
}

/// Dresses every cycle of `shape` with `seq`, visiting vertices row-major
/// within each layer.
pub fn dress(shape: LatticeShape, seq: &ChemicalSequence) -> Result<DressedEnsemble> {
    let order: Vec<usize> = (0..shape.num_vertices()).collect();
    dress_with_order(shape, seq, &order)
}

/// As [`dress`], with the vertex visiting order inside each layer given
/// explicitly as a permutation of row-major indices.
pub fn dress_with_order(
    shape: LatticeShape,
    seq: &ChemicalSequence,
    order: &[usize],
) -> Result<DressedEnsemble> {
    let nv = shape.num_vertices();
    if seq.len() != nv {
        return Err(Error::Validation(format!(
            "sequence length {} does not match {} vertices of {shape}",
            seq.len(),
            nv
        )));
    }
    let mut seen = vec![false; nv];
    for &v in order {
        if v >= nv || std::mem::replace(&mut seen[v], true) {
            return Err(Error::Validation("site order is not a permutation".into()));
        }
    }
    if order.len() != nv {
        return Err(Error::Validation("site order is not a permutation".into()));
    }
    let cycles = enumerate_cycles(shape, usize::MAX)?;
    if cycles.is_empty() {
        return Err(Error::Validation(format!("{shape} has no Hamiltonian cycle")));
    }
    let nbrs: Vec<Vec<[usize; 2]>> = cycles.iter().map(neighbours).collect::<Result<_>>()?;
    let walks: Vec<Vec<Vertex>> = cycles.iter().map(cycle_walk).collect::<Result<_>>()?;

    let norm = |ts: &[Term]| ts.iter().map(|t| t.amp * t.amp).sum::<f64>();
    let amp0 = 1.0 / ((nv * cycles.len()) as f64).sqrt();
    let c1 = seq.code(0);
    let mut terms: Vec<Term> = Vec::with_capacity(2 * nv * cycles.len());
    for cycle in 0..cycles.len() {
        for v in 0..nv {
            let mut sym = vec![EMPTY; nv];
            sym[v] = c1;
            terms.push(Term { cycle, start: v, tail: v, sym, amp: amp0 });
        }
    }
    let mut layer_norms = vec![norm(&terms)];

    // K/M: a monomer with two empty cycle neighbours puts t on either side.
    let mut next = Vec::with_capacity(2 * terms.len());
    for t in terms {
        let mut branch = vec![t];
        for &v in order {
            let mut out = Vec::with_capacity(branch.len() * 2);
            for b in branch {
                let [p, q] = nbrs[b.cycle][v];
                if b.sym[v] >= FIRST_MONOMER && b.sym[p] == EMPTY && b.sym[q] == EMPTY {
                    let a = b.amp / 2f64.sqrt();
                    for w in [p, q] {
                        let mut sym = b.sym.clone();
                        sym[w] = TERMINAL;
                        out.push(Term { sym, amp: a, tail: w, ..b.clone() });
                    }
                } else {
                    out.push(b);
                }
            }
            branch = out;
        }
        if branch.len() != 2 {
            return Err(stuck("K/M", &branch[0]));
        }
        next.extend(branch);
    }
    terms = next;
    layer_norms.push(norm(&terms));

    // W marks the empty vertex next to a monomer, V settles it as c_l.
    for l in 1..nv - 1 {
        let c = seq.code(l);
        for t in &mut terms {
            let mut placed = 0;
            for &v in order {
                let [p, q] = nbrs[t.cycle][v];
                if t.sym[v] == EMPTY && (t.sym[p] >= FIRST_MONOMER || t.sym[q] >= FIRST_MONOMER) {
                    t.sym[v] = FRESH;
                    placed += 1;
                }
            }
            if placed != 1 {
                return Err(stuck("W", t));
            }
            for &v in order {
                if t.sym[v] == FRESH {
                    t.sym[v] = c;
                }
            }
        }
        layer_norms.push(norm(&terms));
    }

    // Z: the terminal becomes the last monomer.
    let last = seq.code(nv - 1);
    for t in &mut terms {
        let mut hit = false;
        for &v in order {
            if t.sym[v] == TERMINAL {
                t.sym[v] = last;
                hit = true;
            }
        }
        if !hit {
            return Err(stuck("Z", t));
        }
    }
    layer_norms.push(norm(&terms));

    let mut out = Vec::with_capacity(terms.len());
    for t in &terms {
        let walk = &walks[t.cycle];
        let k = walk.iter().position(|&(i, j)| i * shape.n + j == t.start).unwrap();
        let (i, j) = walk[(k + 1) % nv];
        let orientation = if i * shape.n + j == t.tail { -1 } else { 1 };
        check_placement(walk, &t.sym, seq, shape, k, orientation)?;
        out.push(DressedTerm {
            cycle: t.cycle,
            start: walk[k],
            orientation,
            symbols: t.sym.iter().map(|&c| seq.char_of(c)).collect(),
            amplitude: t.amp,
        });
    }
    let mut ens = DressedEnsemble {
        shape,
        sequence: seq.clone(),
        cycles: cycles
            .iter()
            .map(|c| c.big_index().to_string())
            .collect(),
        terms: out,
        layer_norms,
        distinct_terms: 0,
        amplitude_two_orientations: 1.0 / ((2 * nv * cycles.len()) as f64).sqrt(),
        amplitude_placements_only: amp0,
    };
    ens.distinct_terms = ens.merged().len();
    Ok(ens)
}

/// Walk index of sequence position `l` for a placement starting at walk
/// index `k`.
fn walk_index(k: usize, l: usize, dir: i8, n: usize) -> usize {
    if dir == 1 {
        (k + l) % n
    } else {
        (k + n - l) % n
    }
}

fn check_placement(
    walk: &[Vertex],
    sym: &[u8],
    seq: &ChemicalSequence,
    shape: LatticeShape,
    k: usize,
    dir: i8,
) -> Result<()> {
    let n = walk.len();
    for l in 0..n {
        let (i, j) = walk[walk_index(k, l, dir, n)];
        if sym[i * shape.n + j] != seq.code(l) {
            return Err(Error::Validation(
                "assignment is not contiguous along its cycle".into(),
            ));
        }
    }
    Ok(())
}

/// CSV: one row per term.
pub fn dressed_csv(ens: &DressedEnsemble) -> String {
    let mut out = format!(
        "# schema={DRESSED_CSV_SCHEMA}\ncycle,start_row,start_col,orientation,symbols,amplitude\n"
    );
    for t in &ens.terms {
        writeln!(
            out,
            "{},{},{},{},{},{:.15e}",
            t.cycle, t.start.0, t.start.1, t.orientation, t.symbols, t.amplitude
        )
        .unwrap();
    }
    out
}

/// Pair energies between monomer symbols; pairs not listed contribute 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactModel {
    pub symbols: Vec<char>,
    pub energies: Vec<(char, char, f64)>,
}

impl ContactModel {
    /// Hydrophobic contacts `E(H,H) = -1`.
    pub fn hp() -> Self {
        Self {
            symbols: vec!['H', 'P'],
            energies: vec![('H', 'H', -1.0)],
        }
    }

    fn pair(&self, a: char, b: char) -> f64 {
        self.energies
            .iter()
            .filter(|&&(x, y, _)| (x, y) == (a, b) || (x, y) == (b, a))
            .map(|e| e.2)
            .sum()
    }
}

impl Default for ContactModel {
    fn default() -> Self {
        Self::hp()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HpPartition {
    pub beta: f64,
    /// `sum |a|^2 exp(-beta E)` over the dressed terms.
    pub z: f64,
    /// `z` times the number of terms: a plain sum over (cycle, start,
    /// orientation).
    pub z_unnormalized: f64,
    pub term_count: usize,
}

/// Contact energy of one assignment: grid-adjacent vertex pairs whose
/// sequence positions are not consecutive. The closing pair (first, last)
/// counts as a contact.
fn contact_energy(
    shape: LatticeShape,
    symbols: &[char],
    position: &[usize],
    model: &ContactModel,
) -> f64 {
    let mut e = 0.0;
    for i in 0..shape.m {
        for j in 0..shape.n {
            let a = i * shape.n + j;
            for b in [(j + 1 < shape.n).then(|| a + 1), (i + 1 < shape.m).then(|| a + shape.n)]
                .into_iter()
                .flatten()
            {
                if position[a].abs_diff(position[b]) != 1 {
                    e += model.pair(symbols[a], symbols[b]);
                }
            }
        }
    }
    e
}

pub fn heteropolymer_partition(
    ens: &DressedEnsemble,
    model: &ContactModel,
    beta: f64,
) -> Result<HpPartition> {
    if let Some(c) = ens.sequence.alphabet.iter().find(|c| !model.symbols.contains(c)) {
        return Err(Error::Validation(format!("symbol {c:?} missing from contact model")));
    }
    let shape = ens.shape;
    let walks: Vec<Vec<Vertex>> = ens
        .cycles
        .iter()
        .map(|idx| {
            let idx: BigUint = idx
                .parse()
                .map_err(|_| Error::Format(format!("bad cycle index {idx:?}")))?;
            cycle_walk(&DualConfig::from_big_index(shape, &idx)?)
        })
        .collect::<Result<_>>()?;
    let nv = shape.num_vertices();
    let mut z = 0.0;
    for t in &ens.terms {
        let walk = &walks[t.cycle];
        let k0 = walk.iter().position(|&v| v == t.start).unwrap();
        let mut position = vec![0usize; nv];
        for l in 0..nv {
            let (i, j) = walk[walk_index(k0, l, t.orientation, nv)];
            position[i * shape.n + j] = l;
        }
        let symbols: Vec<char> = t.symbols.chars().collect();
        let e = contact_energy(shape, &symbols, &position, model);
        z += t.amplitude * t.amplitude * (-beta * e).exp();
    }
    Ok(HpPartition {
        beta,
        z,
        z_unnormalized: z * ens.terms.len() as f64,
        term_count: ens.terms.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(s: &str) -> ChemicalSequence {
        ChemicalSequence::parse(s).unwrap()
    }

    #[test]
    fn ladder_terms() {
        let shape = LatticeShape::new(2, 4).unwrap();
        let ens = dress(shape, &seq("PPPHPHHH")).unwrap();
        assert_eq!(ens.terms.len(), 16);
        assert_eq!(ens.distinct_terms, 16);
        // period 4 along the cycle, and mirror symmetric
        let periodic = dress(shape, &seq("PPHHPPHH")).unwrap();
        assert_eq!(periodic.terms.len(), 16);
        assert_eq!(periodic.distinct_terms, 4);
        for t in &ens.terms {
            assert!((t.amplitude - 0.25).abs() < 1e-15);
        }
        let triples: BTreeSet<_> = ens.terms.iter().map(|t| (t.cycle, t.start, t.orientation)).collect();
        assert_eq!(triples.len(), 16);
        for w in &ens.layer_norms {
            assert!((w - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn square_terms() {
        let shape = LatticeShape::new(4, 4).unwrap();
        let ens = dress(shape, &seq("PPPPPHHHHHHPPPPP")).unwrap();
        assert_eq!(ens.terms.len(), 192);
        assert!((ens.total_weight() - 1.0).abs() < 1e-12);
        let a = ens.amplitude_two_orientations;
        assert!((a - 1.0 / 192f64.sqrt()).abs() < 1e-15);
        assert!(ens.terms.iter().all(|t| (t.amplitude - a).abs() < 1e-15));
    }

    #[test]
    fn repeated_symbols_merge() {
        let shape = LatticeShape::new(4, 4).unwrap();
        let ens = dress(shape, &seq(&"H".repeat(16))).unwrap();
        assert_eq!(ens.distinct_terms, 6);
        let w: f64 = ens.merged().values().map(|a| a * a).sum();
        assert!((w - 1.0).abs() < 1e-12);
    }

    #[test]
    fn site_order_does_not_matter() {
        let shape = LatticeShape::new(2, 4).unwrap();
        let s = seq("HPPHPHHP");
        let base = dress(shape, &s).unwrap().merged();
        for order in [vec![7, 6, 5, 4, 3, 2, 1, 0], vec![3, 0, 6, 1, 7, 4, 2, 5]] {
            assert_eq!(dress_with_order(shape, &s, &order).unwrap().merged(), base);
        }
    }

    #[test]
    fn bad_inputs() {
        let shape = LatticeShape::new(2, 4).unwrap();
        assert!(dress(shape, &seq("PPH")).is_err());
        assert!(ChemicalSequence::parse("PtH").is_err());
        let ens = dress(shape, &seq("PPHHPPXH")).unwrap();
        assert!(heteropolymer_partition(&ens, &ContactModel::hp(), 1.0).is_err());
    }

    #[test]
    fn all_polar_is_flat() {
        let shape = LatticeShape::new(4, 4).unwrap();
        let ens = dress(shape, &seq(&"P".repeat(16))).unwrap();
        for beta in [0.0, 1.0, 3.0] {
            let z = heteropolymer_partition(&ens, &ContactModel::hp(), beta).unwrap();
            assert!((z.z - 1.0).abs() < 1e-12);
            assert!((z.z_unnormalized - 192.0).abs() < 1e-9);
        }
    }

    /// Direct sum over cycles, starts and directions, following each cycle
    /// with its own edge walk.
    fn oracle(shape: LatticeShape, s: &str, beta: f64) -> f64 {
        let cycles = enumerate_cycles(shape, usize::MAX).unwrap();
        let chars: Vec<char> = s.chars().collect();
        let nv = shape.num_vertices();
        let mut total = 0.0;
        let mut count = 0usize;
        for cfg in &cycles {
            let edges = extract_edges(cfg);
            let mut walk = vec![(0usize, 0usize)];
            while walk.len() < nv {
                let cur = *walk.last().unwrap();
                let nxt = edges
                    .iter()
                    .filter_map(|e| {
                        if e.a == cur { Some(e.b) } else if e.b == cur { Some(e.a) } else { None }
                    })
                    .find(|v| !walk.contains(v))
                    .unwrap();
                walk.push(nxt);
            }
            for start in 0..nv {
                for dir in [1usize, nv - 1] {
                    let mut label = vec![' '; nv];
                    let mut pos = vec![0usize; nv];
                    for l in 0..nv {
                        let (i, j) = walk[(start + dir * l) % nv];
                        label[i * shape.n + j] = chars[l];
                        pos[i * shape.n + j] = l;
                    }
                    let mut e = 0.0;
                    for a in 0..nv {
                        for b in a + 1..nv {
                            let (ai, aj) = (a / shape.n, a % shape.n);
                            let (bi, bj) = (b / shape.n, b % shape.n);
                            let adjacent = ai.abs_diff(bi) + aj.abs_diff(bj) == 1;
                            if adjacent && pos[a].abs_diff(pos[b]) != 1 && label[a] == 'H' && label[b] == 'H' {
                                e -= 1.0;
                            }
                        }
                    }
                    total += (-beta * e).exp();
                    count += 1;
                }
            }
        }
        total / count as f64
    }

    #[test]
    fn partition_matches_oracle() {
        for (m, n, s) in [
            (4, 4, "PPPPPHHHHHHPPPPP"),
            (4, 4, "HPHPPHHPHPPHHPHH"),
            (2, 6, "HHPHPPHHHPPH"),
            (4, 5, "HHPPHPHHPHPPHHHPHPHH"),
        ] {
            let shape = LatticeShape::new(m, n).unwrap();
            let ens = dress(shape, &seq(s)).unwrap();
            for beta in [0.0, 0.5, 1.0] {
                let z = heteropolymer_partition(&ens, &ContactModel::hp(), beta).unwrap().z;
                let want = oracle(shape, s, beta);
                assert!((z - want).abs() < 1e-10 * want, "{m}x{n} beta {beta}: {z} vs {want}");
            }
        }
    }
}
