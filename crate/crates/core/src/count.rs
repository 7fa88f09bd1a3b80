//! Exact Hamiltonian-cycle counting: exhaustive enumeration for small bulks
//! and a connectivity-state transfer matrix for wider grids.

use std::collections::HashMap;
use std::time::Instant;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{classify, DualConfig, LatticeShape};
use crate::protocols::EnergyModel;
use crate::rules::check_exhaustive;

/// Largest frontier width accepted by the transfer matrix.
pub const TRANSFER_MAX_WIDTH: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountMethod {
    Brute,
    Transfer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountResult {
    pub shape: LatticeShape,
    #[serde(with = "biguint_string")]
    pub count: BigUint,
    pub method: CountMethod,
}

impl CountResult {
    pub fn as_f64(&self) -> f64 {
        self.count.to_f64().unwrap_or(f64::INFINITY)
    }
}

mod biguint_string {
    use num_bigint::BigUint;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &BigUint, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Dual row `i` of a bulk index, as an `(n+1)`-bit word with bit `j` the
/// plaquette in column `j` (frame columns are always 0).
fn dual_row(shape: LatticeShape, idx: u64, i: usize) -> u64 {
    if i == 0 || i == shape.m {
        return 0;
    }
    let bc = shape.bulk_cols();
    ((idx >> ((i - 1) * bc)) & ((1u64 << bc) - 1)) << 1
}

/// True when every vertex between dual rows `above` and `below` has degree 2.
fn rows_compatible(above: u64, below: u64, n: usize) -> bool {
    let e_top = above ^ (above >> 1);
    let e_bot = below ^ (below >> 1);
    let e_left = above ^ below;
    let e_right = e_left >> 1;
    let any = e_top | e_bot | e_left | e_right;
    let all = e_top & e_bot & e_left & e_right;
    let need = (1u64 << n) - 1;
    (any & !all) & need == need
}

fn is_two_factor_index(shape: LatticeShape, idx: u64) -> bool {
    (0..shape.m).all(|i| {
        rows_compatible(dual_row(shape, idx, i), dual_row(shape, idx, i + 1), shape.n)
    })
}

/// Count Hamiltonian cycles by scanning every bulk configuration.
pub fn brute_force_count(shape: LatticeShape) -> Result<CountResult> {
    check_exhaustive(shape)?;
    let mut count = 0u64;
    for idx in 0..1u64 << shape.num_bulk() {
        if is_two_factor_index(shape, idx)
            && classify(&DualConfig::from_index(shape, idx)?).is_hamiltonian_cycle()
        {
            count += 1;
        }
    }
    Ok(CountResult {
        shape,
        count: BigUint::from(count),
        method: CountMethod::Brute,
    })
}

/// Bulk indices of all Hamiltonian cycles, by exhaustive scan.
pub fn brute_force_cycles(shape: LatticeShape) -> Result<Vec<u64>> {
    check_exhaustive(shape)?;
    let mut out = Vec::new();
    for idx in 0..1u64 << shape.num_bulk() {
        if is_two_factor_index(shape, idx)
            && classify(&DualConfig::from_index(shape, idx)?).is_hamiltonian_cycle()
        {
            out.push(idx);
        }
    }
    Ok(out)
}

/// All Hamiltonian cycles by row-wise depth-first search over dual rows that
/// keep every vertex at degree 2, followed by a single-loop check. Reaches
/// beyond the exhaustive cap as long as the result fits in `limit`.
pub fn enumerate_cycles(shape: LatticeShape, limit: usize) -> Result<Vec<DualConfig>> {
    let bc = shape.bulk_cols();
    if bc > 20 {
        return Err(Error::ResourceLimit {
            what: "bulk columns for row enumeration",
            limit: 20,
            requested: bc,
        });
    }
    let rows: Vec<u64> = (0..1u64 << bc).map(|r| r << 1).collect();
    let mut out = Vec::new();
    let mut stack: Vec<u64> = Vec::with_capacity(shape.m + 1);
    stack.push(0);
    fn dfs(
        shape: LatticeShape,
        rows: &[u64],
        stack: &mut Vec<u64>,
        out: &mut Vec<DualConfig>,
        limit: usize,
    ) -> Result<()> {
        let prev = *stack.last().unwrap();
        if stack.len() == shape.m {
            if !rows_compatible(prev, 0, shape.n) {
                return Ok(());
            }
            let mut bulk = Vec::with_capacity(shape.num_bulk());
            for &r in &stack[1..] {
                for c in 0..shape.bulk_cols() {
                    bulk.push((r >> (c + 1)) & 1 == 1);
                }
            }
            let cfg = DualConfig::from_bulk_bits(shape, &bulk)?;
            if classify(&cfg).is_hamiltonian_cycle() {
                if out.len() >= limit {
                    return Err(Error::ResourceLimit {
                        what: "enumerated cycles",
                        limit,
                        requested: limit + 1,
                    });
                }
                out.push(cfg);
            }
            return Ok(());
        }
        for &r in rows {
            if rows_compatible(prev, r, shape.n) {
                stack.push(r);
                dfs(shape, rows, stack, out, limit)?;
                stack.pop();
            }
        }
        Ok(())
    }
    dfs(shape, &rows, &mut stack, &mut out, limit)?;
    Ok(out)
}

const EMPTY: u8 = 0;
const OPEN: u8 = 1;
const CLOSE: u8 = 2;

#[inline]
fn plug(state: u64, k: usize) -> u8 {
    ((state >> (2 * k)) & 3) as u8
}

#[inline]
fn with_plug(state: u64, k: usize, v: u8) -> u64 {
    (state & !(3u64 << (2 * k))) | ((v as u64) << (2 * k))
}

/// Position of the plug that closes the path opened at `k`.
fn matching_close(state: u64, k: usize, len: usize) -> usize {
    let mut depth = 0i32;
    for p in k..len {
        match plug(state, p) {
            OPEN => depth += 1,
            CLOSE => {
                depth -= 1;
                if depth == 0 {
                    return p;
                }
            }
            _ => {}
        }
    }
    unreachable!("unbalanced frontier state")
}

/// Position of the plug that opened the path closed at `k`.
fn matching_open(state: u64, k: usize) -> usize {
    let mut depth = 0i32;
    for p in (0..=k).rev() {
        match plug(state, p) {
            CLOSE => depth += 1,
            OPEN => {
                depth -= 1;
                if depth == 0 {
                    return p;
                }
            }
            _ => {}
        }
    }
    unreachable!("unbalanced frontier state")
}

/// Count Hamiltonian cycles with a vertex-by-vertex frontier sweep.
///
/// The frontier holds `width + 1` plugs, each empty or one end of a path
/// segment; path ends are paired as balanced parentheses, which planarity
/// makes sufficient. Two ends of the same segment may only meet at the final
/// vertex with nothing else on the frontier, so exactly one loop closes and
/// every vertex gets degree 2.
pub fn transfer_matrix_count(shape: LatticeShape) -> Result<CountResult> {
    let width = shape.m.min(shape.n);
    let length = shape.m.max(shape.n);
    if width > TRANSFER_MAX_WIDTH {
        return Err(Error::ResourceLimit {
            what: "frontier width of the transfer matrix",
            limit: TRANSFER_MAX_WIDTH,
            requested: width,
        });
    }
    let plugs = width + 1;
    let mut states: HashMap<u64, BigUint> = HashMap::from([(0u64, BigUint::one())]);
    let mut total = BigUint::zero();
    for r in 0..length {
        for c in 0..width {
            let last_row = r + 1 == length;
            let last_col = c + 1 == width;
            let mut next: HashMap<u64, BigUint> = HashMap::with_capacity(states.len() * 2);
            let mut push = |s: u64, w: &BigUint| {
                *next.entry(s).or_insert_with(BigUint::zero) += w;
            };
            for (&s, w) in &states {
                let left = plug(s, c);
                let up = plug(s, c + 1);
                let base = with_plug(with_plug(s, c, EMPTY), c + 1, EMPTY);
                match (left, up) {
                    (EMPTY, EMPTY) => {
                        if !last_row && !last_col {
                            push(with_plug(with_plug(base, c, OPEN), c + 1, CLOSE), w);
                        }
                    }
                    (p, EMPTY) | (EMPTY, p) => {
                        if !last_row {
                            push(with_plug(base, c, p), w);
                        }
                        if !last_col {
                            push(with_plug(base, c + 1, p), w);
                        }
                    }
                    (OPEN, OPEN) => {
                        let k = matching_close(s, c + 1, plugs);
                        push(with_plug(base, k, OPEN), w);
                    }
                    (CLOSE, CLOSE) => {
                        let k = matching_open(s, c);
                        push(with_plug(base, k, CLOSE), w);
                    }
                    (CLOSE, OPEN) => push(base, w),
                    (OPEN, CLOSE) => {
                        if last_row && last_col && base == 0 {
                            total += w;
                        }
                    }
                    _ => unreachable!("invalid plug value"),
                }
            }
            states = next;
        }
        // carry the frontier into the next row: the right plug of the last
        // column must be empty, and a fresh empty left plug enters at 0
        states = states
            .into_iter()
            .filter(|(s, _)| plug(*s, width) == EMPTY)
            .map(|(s, w)| ((s << 2) & ((1u64 << (2 * plugs)) - 1), w))
            .collect();
    }
    Ok(CountResult {
        shape,
        count: total,
        method: CountMethod::Transfer,
    })
}

/// Per-cycle Boltzmann weights and their sum for a diagonal energy model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoltzmannBrute {
    pub beta: f64,
    pub partition: f64,
    pub energies: Vec<f64>,
    pub weights: Vec<f64>,
    pub cycles: Vec<u64>,
}

pub fn boltzmann_brute_force(
    shape: LatticeShape,
    model: &EnergyModel,
    beta: f64,
) -> Result<BoltzmannBrute> {
    let cycles = brute_force_cycles(shape)?;
    let mut energies = Vec::with_capacity(cycles.len());
    for &idx in &cycles {
        energies.push(model.energy(&DualConfig::from_index(shape, idx)?));
    }
    let weights: Vec<f64> = energies.iter().map(|e| (-beta * e).exp()).collect();
    Ok(BoltzmannBrute {
        beta,
        partition: weights.iter().sum(),
        energies,
        weights,
        cycles,
    })
}

/// One fixed Hamiltonian cycle: along the top row, then a serpentine over the
/// remaining columns, then back up the first column.
pub fn comb_cycle(shape: LatticeShape) -> Result<DualConfig> {
    let (m, n) = (shape.m, shape.n);
    let transpose = m % 2 == 1;
    if transpose && n % 2 == 1 {
        return Err(Error::Validation(format!("{shape} admits no Hamiltonian cycle")));
    }
    let (rows, cols) = if transpose { (n, m) } else { (m, n) };
    let mut path: Vec<(usize, usize)> = (0..cols).map(|c| (0, c)).collect();
    for r in 1..rows {
        if r % 2 == 1 {
            path.extend((1..cols).rev().map(|c| (r, c)));
        } else {
            path.extend((1..cols).map(|c| (r, c)));
        }
    }
    path.extend((1..rows).rev().map(|r| (r, 0)));
    // vertical[r][c]: edge between (r, c) and (r + 1, c)
    let mut vertical = vec![vec![false; cols]; rows];
    for k in 0..path.len() {
        let (a, b) = (path[k], path[(k + 1) % path.len()]);
        if a.1 == b.1 {
            vertical[a.0.min(b.0)][a.1] = true;
        }
    }
    let mut cfg = DualConfig::zeros(shape);
    for i in 1..rows {
        let mut inside = false;
        for j in 1..cols {
            inside ^= vertical[i - 1][j - 1];
            if inside {
                let (di, dj) = if transpose { (j, i) } else { (i, j) };
                cfg.set(di, dj, true)?;
            }
        }
    }
    Ok(cfg)
}

/// Time a count, returning the result and elapsed milliseconds.
pub fn timed_count(shape: LatticeShape, method: CountMethod) -> Result<(CountResult, f64)> {
    let t = Instant::now();
    let res = match method {
        CountMethod::Brute => brute_force_count(shape)?,
        CountMethod::Transfer => transfer_matrix_count(shape)?,
    };
    Ok((res, t.elapsed().as_secs_f64() * 1e3))
}
