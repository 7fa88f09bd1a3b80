//! Exact sparse construction of the parent Hamiltonian and its pieces over
//! the full `2^N` configuration space, plus eigen-analysis and per-sector
//! spectra with the analytic gap bounds evaluated alongside.

use std::io::{BufRead, Write};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::LatticeShape;
use crate::linalg::eigh;
use crate::rules::{check_exhaustive, compile_moves, sector_partition, CompiledMove, SectorLabel};

/// Eigenvalues closer than this to the minimum count as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-8;

/// Real symmetric operator in compressed sparse row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl SparseOperator {
    /// Assemble from coordinate triplets; duplicates are summed and exact
    /// zeros dropped.
    pub fn from_triplets(dim: usize, mut trip: Vec<(u32, u32, f64)>) -> Self {
        trip.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut cols = Vec::with_capacity(trip.len());
        let mut vals: Vec<f64> = Vec::with_capacity(trip.len());
        let mut rows = Vec::with_capacity(trip.len());
        for (r, c, v) in trip {
            if rows.last() == Some(&r) && cols.last() == Some(&c) {
                *vals.last_mut().unwrap() += v;
            } else {
                rows.push(r);
                cols.push(c);
                vals.push(v);
            }
        }
        let mut keep_cols = Vec::with_capacity(cols.len());
        let mut keep_vals = Vec::with_capacity(vals.len());
        for ((r, c), v) in rows.into_iter().zip(cols).zip(vals) {
            if v != 0.0 {
                row_ptr[r as usize + 1] += 1;
                keep_cols.push(c);
                keep_vals.push(v);
            }
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseOperator {
            dim,
            row_ptr,
            cols: keep_cols,
            vals: keep_vals,
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let trip = diag
            .iter()
            .enumerate()
            .map(|(i, &v)| (i as u32, i as u32, v))
            .collect();
        Self::from_triplets(diag.len(), trip)
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diagonal(&vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `(col, value)` pairs of row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()]
            .iter()
            .zip(&self.vals[span])
            .map(|(&c, &v)| (c as usize, v))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.cols[span.clone()].binary_search(&(c as u32)) {
            Ok(k) => self.vals[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (r, out) in y.iter_mut().enumerate().take(self.dim) {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k] as usize];
            }
            *out = acc;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        self.matvec(x, &mut y);
        y
    }

    /// Sum of several operators of equal dimension.
    pub fn sum(ops: &[&SparseOperator]) -> Self {
        let dim = ops.first().map_or(0, |o| o.dim);
        let mut trip = Vec::with_capacity(ops.iter().map(|o| o.nnz()).sum());
        for op in ops {
            assert_eq!(op.dim, dim, "operator dimensions differ");
            trip.extend(op.triplets().map(|(r, c, v)| (r as u32, c as u32, v)));
        }
        Self::from_triplets(dim, trip)
    }

    /// Largest asymmetry `|A_rc - A_cr|` over stored entries.
    pub fn max_asymmetry(&self) -> f64 {
        self.triplets()
            .map(|(r, c, v)| (v - self.get(c, r)).abs())
            .fold(0.0, f64::max)
    }

    /// Gershgorin bound on the spectral norm.
    pub fn norm_bound(&self) -> f64 {
        (0..self.dim)
            .map(|r| self.row(r).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut a = Array2::zeros((self.dim, self.dim));
        for (r, c, v) in self.triplets() {
            a[[r, c]] = v;
        }
        a
    }

    /// Principal submatrix on the given (sorted) basis indices, as dense.
    pub fn restrict_dense(&self, basis: &[u64]) -> Array2<f64> {
        let mut a = Array2::zeros((basis.len(), basis.len()));
        for (i, &x) in basis.iter().enumerate() {
            for (c, v) in self.row(x as usize) {
                if let Ok(j) = basis.binary_search(&(c as u64)) {
                    a[[i, j]] = v;
                }
            }
        }
        a
    }

    /// Principal submatrix on the given (sorted) basis indices, as sparse.
    pub fn restrict(&self, basis: &[u64]) -> SparseOperator {
        let mut trip = Vec::new();
        for (i, &x) in basis.iter().enumerate() {
            for (c, v) in self.row(x as usize) {
                if let Ok(j) = basis.binary_search(&(c as u64)) {
                    trip.push((i as u32, j as u32, v));
                }
            }
        }
        Self::from_triplets(basis.len(), trip)
    }

    /// Coordinate-triplet text: a `dim nnz` header, then `row col value`.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {}", self.dim, self.nnz())?;
        for (r, c, v) in self.triplets() {
            writeln!(w, "{r} {c} {v:e}")?;
        }
        Ok(())
    }

    pub fn read_triplets<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty triplet file".into()))??;
        let mut it = header.split_whitespace();
        let parse_usize = |s: Option<&str>| -> Result<usize> {
            s.and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::Format(format!("bad triplet header '{header}'")))
        };
        let dim = parse_usize(it.next())?;
        let nnz = parse_usize(it.next())?;
        let mut trip = Vec::with_capacity(nnz);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::Format(format!("bad triplet line '{line}'"));
            if f.len() != 3 {
                return Err(bad());
            }
            let r: u32 = f[0].parse().map_err(|_| bad())?;
            let c: u32 = f[1].parse().map_err(|_| bad())?;
            let v: f64 = f[2].parse().map_err(|_| bad())?;
            if r as usize >= dim || c as usize >= dim {
                return Err(bad());
            }
            trip.push((r, c, v));
        }
        if trip.len() != nnz {
            return Err(Error::Format(format!(
                "triplet count {} does not match header {nnz}",
                trip.len()
            )));
        }
        Ok(Self::from_triplets(dim, trip))
    }
}

/// Bulk positions of the four plaquettes around each vertex, `None` on the
/// frame, in window order top-left, top-right, bottom-left, bottom-right.
pub(crate) fn vertex_windows(shape: LatticeShape) -> Vec<((usize, usize), [Option<usize>; 4])> {
    let mut out = Vec::with_capacity(shape.num_vertices());
    for i in 0..shape.m {
        for j in 0..shape.n {
            out.push((
                (i, j),
                [
                    shape.bulk_position(i, j),
                    shape.bulk_position(i, j + 1),
                    shape.bulk_position(i + 1, j),
                    shape.bulk_position(i + 1, j + 1),
                ],
            ));
        }
    }
    out
}

#[inline]
fn window_code(x: u64, w: &[Option<usize>; 4]) -> u8 {
    let mut code = 0u8;
    for (k, p) in w.iter().enumerate() {
        if let Some(p) = p {
            code |= (((x >> p) & 1) as u8) << k;
        }
    }
    code
}

/// Window codes (bit k = plaquette k in window order) that violate a vertex
/// constraint: all empty, all set, or the two diagonal patterns.
#[inline]
pub(crate) fn code_violates(code: u8) -> bool {
    matches!(code, 0 | 15 | 6 | 9)
}

/// Masks for single-plaquette loop detection at each bulk plaquette: the
/// centre bit and the bits of its bulk neighbours (frame neighbours are 0).
fn loop_masks(shape: LatticeShape) -> Vec<((usize, usize), u64, u64)> {
    let mut out = Vec::with_capacity(shape.num_bulk());
    for i in 1..shape.m {
        for j in 1..shape.n {
            let centre = 1u64 << shape.bulk_position(i, j).unwrap();
            let mut nb = 0u64;
            for (a, b) in [(i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)] {
                if let Some(p) = shape.bulk_position(a, b) {
                    nb |= 1 << p;
                }
            }
            out.push(((i, j), centre, nb));
        }
    }
    out
}

#[inline]
fn is_local_loop(x: u64, centre: u64, nb: u64, frame_adjacent: bool) -> bool {
    if x & centre != 0 {
        x & nb == 0
    } else {
        // an empty centre needs four set neighbours, impossible next to the frame
        !frame_adjacent && x & nb == nb
    }
}

fn check_dim(shape: LatticeShape) -> Result<usize> {
    check_exhaustive(shape)?;
    Ok(1usize << shape.num_bulk())
}

/// Diagonal of the constraint penalty: number of violated vertex windows.
pub fn hc_penalty_diagonal(shape: LatticeShape) -> Result<Vec<f64>> {
    let dim = check_dim(shape)?;
    let wins = vertex_windows(shape);
    Ok((0..dim as u64)
        .map(|x| wins.iter().filter(|(_, w)| code_violates(window_code(x, w))).count() as f64)
        .collect())
}

/// Diagonal of the local-loop penalty.
pub fn local_loop_diagonal(shape: LatticeShape) -> Result<Vec<f64>> {
    let dim = check_dim(shape)?;
    let masks = loop_masks(shape);
    Ok((0..dim as u64)
        .map(|x| {
            masks
                .iter()
                .filter(|&&(_, c, nb)| is_local_loop(x, c, nb, nb.count_ones() < 4))
                .count() as f64
        })
        .collect())
}

pub fn build_hc_penalty(shape: LatticeShape) -> Result<SparseOperator> {
    Ok(SparseOperator::from_diagonal(&hc_penalty_diagonal(shape)?))
}

pub fn build_local_loop_penalty(shape: LatticeShape) -> Result<SparseOperator> {
    Ok(SparseOperator::from_diagonal(&local_loop_diagonal(shape)?))
}

/// Every configuration in the domain of a forward move: context matched,
/// source set and target empty.
fn move_domain(mv: &CompiledMove, full: u64) -> impl Iterator<Item = u64> {
    let fixed = mv.ones | mv.zeros | mv.source | mv.target;
    let free = full & !fixed;
    let base = mv.ones | mv.source;
    let mut sub = 0u64;
    let mut done = false;
    std::iter::from_fn(move || {
        if done {
            return None;
        }
        let x = base | sub;
        sub = sub.wrapping_sub(free) & free;
        done = sub == 0;
        Some(x)
    })
}

/// Multiplicity-weighted Laplacian of the rule graph: each rule placement
/// contributes `P_dom + P_img - e - e^T` for its forward move `e`.
pub fn build_laplacian(shape: LatticeShape) -> Result<SparseOperator> {
    let dim = check_dim(shape)?;
    let full = (dim as u64).wrapping_sub(1);
    let mut trip = Vec::new();
    for mv in compile_moves(shape)? {
        for x in move_domain(&mv, full) {
            let y = x ^ (mv.source | mv.target);
            let (x, y) = (x as u32, y as u32);
            trip.push((x, x, 1.0));
            trip.push((y, y, 1.0));
            trip.push((x, y, -1.0));
            trip.push((y, x, -1.0));
        }
    }
    Ok(SparseOperator::from_triplets(dim, trip))
}

/// Matrix of a single forward move operator (`|y><x|` for each domain `x`).
pub fn move_operator(shape: LatticeShape, mv: &CompiledMove) -> Result<SparseOperator> {
    let dim = check_dim(shape)?;
    let full = (dim as u64).wrapping_sub(1);
    let trip = move_domain(mv, full)
        .map(|x| ((x ^ (mv.source | mv.target)) as u32, x as u32, 1.0))
        .collect();
    Ok(SparseOperator::from_triplets(dim, trip))
}

/// The three pieces and their sum.
#[derive(Debug, Clone)]
pub struct ParentHamiltonian {
    pub shape: LatticeShape,
    pub constraints: SparseOperator,
    pub local_loops: SparseOperator,
    pub laplacian: SparseOperator,
    pub total: SparseOperator,
}

pub fn assemble_parts(shape: LatticeShape) -> Result<ParentHamiltonian> {
    let constraints = build_hc_penalty(shape)?;
    let local_loops = build_local_loop_penalty(shape)?;
    let laplacian = build_laplacian(shape)?;
    let total = SparseOperator::sum(&[&constraints, &local_loops, &laplacian]);
    Ok(ParentHamiltonian {
        shape,
        constraints,
        local_loops,
        laplacian,
        total,
    })
}

pub fn assemble_hhc(shape: LatticeShape) -> Result<SparseOperator> {
    Ok(assemble_parts(shape)?.total)
}

/// One positive semidefinite summand of the parent Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub enum LocalTerm {
    Constraint { vertex: (usize, usize), window: [Option<usize>; 4] },
    LocalLoop { plaquette: (usize, usize), centre: u64, neighbours: u64 },
    Rewrite(CompiledMove),
}

impl LocalTerm {
    /// Dense action of the term on a full state vector.
    pub fn apply(&self, psi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; psi.len()];
        match self {
            LocalTerm::Constraint { window, .. } => {
                for (x, o) in out.iter_mut().enumerate() {
                    if code_violates(window_code(x as u64, window)) {
                        *o = psi[x];
                    }
                }
            }
            LocalTerm::LocalLoop { centre, neighbours, .. } => {
                let edge = neighbours.count_ones() < 4;
                for (x, o) in out.iter_mut().enumerate() {
                    if is_local_loop(x as u64, *centre, *neighbours, edge) {
                        *o = psi[x];
                    }
                }
            }
            LocalTerm::Rewrite(mv) => {
                let flip = mv.source | mv.target;
                for x in 0..psi.len() as u64 {
                    if mv.forward(x).is_some() {
                        let y = x ^ flip;
                        let d = psi[x as usize] - psi[y as usize];
                        out[x as usize] += d;
                        out[y as usize] -= d;
                    }
                }
            }
        }
        out
    }
}

/// Every local term of the parent Hamiltonian on `shape`.
pub fn local_terms(shape: LatticeShape) -> Result<Vec<LocalTerm>> {
    let mut out: Vec<LocalTerm> = vertex_windows(shape)
        .into_iter()
        .map(|(vertex, window)| LocalTerm::Constraint { vertex, window })
        .collect();
    out.extend(
        loop_masks(shape)
            .into_iter()
            .map(|(plaquette, centre, neighbours)| LocalTerm::LocalLoop {
                plaquette,
                centre,
                neighbours,
            }),
    );
    out.extend(compile_moves(shape)?.into_iter().map(LocalTerm::Rewrite));
    Ok(out)
}

/// Largest entry of `[H_C, e]` over every rule placement, computed from the
/// diagonal directly: the entry at `(y, x)` is `C(y) - C(x)`.
pub fn constraint_commutator_residual(shape: LatticeShape) -> Result<f64> {
    let diag = hc_penalty_diagonal(shape)?;
    let full = (diag.len() as u64).wrapping_sub(1);
    let mut worst = 0.0f64;
    for mv in compile_moves(shape)? {
        for x in move_domain(&mv, full) {
            let y = x ^ (mv.source | mv.target);
            worst = worst.max((diag[y as usize] - diag[x as usize]).abs());
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenOptions {
    pub seed: u64,
    /// Krylov subspace size per restart.
    pub krylov: usize,
    pub max_restarts: usize,
    /// Residual target relative to the operator norm bound.
    pub rel_tol: f64,
    /// Dimension at or below which a dense solve is used.
    pub dense_limit: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            seed: 0x5eed,
            krylov: 80,
            max_restarts: 400,
            rel_tol: 1e-9,
            dense_limit: 1024,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let c = dot(b, v);
            axpy(-c, b, v);
        }
    }
}

fn residual(op: &SparseOperator, v: &[f64], lambda: f64) -> f64 {
    let hv = op.apply(v);
    hv.iter()
        .zip(v)
        .map(|(h, x)| (h - lambda * x).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Lowest eigenpair in the orthogonal complement of `locked`, by thick-restart
/// Lanczos: the projected matrix is formed from full Gram-Schmidt
/// coefficients, and each restart keeps the lowest few Ritz vectors together
/// with the current residual direction.
fn lowest_deflated(
    op: &SparseOperator,
    mut start: Vec<f64>,
    locked: &[Vec<f64>],
    opts: &EigenOptions,
    tol: f64,
) -> Result<(f64, Vec<f64>)> {
    let dim = op.dim();
    let m = opts.krylov.min(dim - locked.len()).max(2);
    let keep = (m / 4).clamp(1, 16).min(m - 1);
    orthogonalize(&mut start, locked);
    if normalize(&mut start) == 0.0 {
        return Err(Error::NoConvergence {
            iterations: 0,
            residual: f64::NAN,
        });
    }
    let mut basis: Vec<Vec<f64>> = vec![start];
    let mut t = Array2::<f64>::zeros((m, m));
    let mut next = 0usize;
    let mut w = vec![0.0; dim];
    let mut last_res = f64::INFINITY;
    for _restart in 0..opts.max_restarts {
        let mut beta = 0.0;
        let mut resid_dir: Option<Vec<f64>> = None;
        let mut j = next;
        while j < m {
            op.matvec(&basis[j], &mut w);
            for i in 0..=j {
                let c = dot(&basis[i], &w);
                t[[i, j]] = c;
                t[[j, i]] = c;
            }
            for i in 0..=j {
                let c = t[[i, j]];
                axpy(-c, &basis[i], &mut w);
            }
            orthogonalize(&mut w, locked);
            orthogonalize(&mut w, &basis);
            beta = normalize(&mut w);
            if beta < 1e-13 * tol / opts.rel_tol {
                beta = 0.0;
                j += 1;
                break;
            }
            if j + 1 < m {
                basis.push(w.clone());
            } else {
                resid_dir = Some(w.clone());
            }
            j += 1;
        }
        let size = j;
        let sub = t.slice(ndarray::s![..size, ..size]).to_owned();
        let (theta, y) = eigh(&sub);
        let ritz = |c: usize| {
            let mut x = vec![0.0; dim];
            for (i, b) in basis.iter().take(size).enumerate() {
                axpy(y[[i, c]], b, &mut x);
            }
            x
        };
        let est = beta * y[[size - 1, 0]].abs();
        if est <= tol || beta == 0.0 || resid_dir.is_none() {
            let mut x = ritz(0);
            orthogonalize(&mut x, locked);
            normalize(&mut x);
            let th = dot(&x, &op.apply(&x));
            let r = residual(op, &x, th);
            last_res = r;
            if r <= tol {
                return Ok((th, x));
            }
            // estimate disagreed with the true residual; restart from x
            basis = vec![x];
            t.fill(0.0);
            next = 0;
            continue;
        }
        last_res = est;
        let p = keep.min(size - 1);
        let mut new_basis: Vec<Vec<f64>> = (0..p).map(ritz).collect();
        t.fill(0.0);
        for i in 0..p {
            t[[i, i]] = theta[i];
        }
        new_basis.push(resid_dir.unwrap());
        basis = new_basis;
        next = p;
    }
    Err(Error::NoConvergence {
        iterations: opts.max_restarts,
        residual: last_res,
    })
}

/// The `k` smallest eigenpairs of a symmetric operator.
///
/// Small operators are diagonalized densely. Larger ones use Lanczos with
/// full reorthogonalization and thick restarts, one eigenpair at a time;
/// converged vectors are locked and projected out of later runs.
pub fn ground_state(op: &SparseOperator, k: usize, opts: &EigenOptions) -> Result<EigenPairs> {
    let dim = op.dim();
    let k = k.min(dim);
    let norm = op.norm_bound().max(1e-300);
    let tol = opts.rel_tol * norm;
    if dim <= opts.dense_limit {
        let (vals, vecs) = eigh(&op.to_dense());
        let mut out = EigenPairs {
            values: Vec::new(),
            vectors: Vec::new(),
            residuals: Vec::new(),
        };
        for j in 0..k {
            let v: Vec<f64> = vecs.column(j).to_vec();
            out.residuals.push(residual(op, &v, vals[j]));
            out.values.push(vals[j]);
            out.vectors.push(v);
        }
        if let Some(&r) = out.residuals.iter().find(|&&r| r > tol) {
            return Err(Error::NoConvergence {
                iterations: 0,
                residual: r,
            });
        }
        return Ok(out);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut locked: Vec<Vec<f64>> = Vec::new();
    let mut values = Vec::new();
    let mut residuals = Vec::new();
    for _ in 0..k {
        let start: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>() - 0.5).collect();
        let (theta, x) = lowest_deflated(op, start, &locked, opts, tol)?;
        residuals.push(residual(op, &x, theta));
        values.push(theta);
        locked.push(x);
    }
    // locking order can differ from eigenvalue order after near-degeneracies
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    Ok(EigenPairs {
        values: order.iter().map(|&i| values[i]).collect(),
        vectors: order.iter().map(|&i| locked[i].clone()).collect(),
        residuals: order.iter().map(|&i| residuals[i]).collect(),
    })
}

/// Spectral data of one rule-graph class.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SectorSpectrum {
    pub label: SectorLabel,
    pub size: usize,
    pub min_eig: f64,
    /// Lowest few eigenvalues of the parent Hamiltonian on this class.
    pub low_eigs: Vec<f64>,
    /// Smallest nonzero Laplacian eigenvalue on the class (none for singletons).
    pub laplacian_gap: Option<f64>,
    /// Smallest nonzero local-loop count on the class (none if no member has one).
    pub local_loop_gap: Option<f64>,
    /// Fraction of members with at least one local loop.
    pub local_loop_fraction: f64,
    /// Constraint violations shared by every member.
    pub violations: usize,
    /// Lower bound from the two-projector analysis with the measured fraction.
    pub projector_bound: Option<f64>,
    /// The three candidates whose minimum is that bound: Laplacian gap,
    /// local-loop gap, and the mixed root.
    pub projector_candidates: Option<[f64; 3]>,
    /// Simplified bound `g / (4V(1+g))` with `V` all dual plaquettes.
    pub simple_bound: Option<f64>,
    /// Same with `V` the bulk plaquette count.
    pub simple_bound_bulk: Option<f64>,
    /// Same with `4mn` in place of `4V`.
    pub bound_mn: Option<f64>,
}

/// Consolidated checks over all sectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundChecks {
    pub z_sectors_at_least_one: bool,
    pub fractions_above_quarter_v: bool,
    pub fractions_above_quarter_mn: bool,
    pub fractions_below_one: bool,
    pub min_eig_above_projector_bound: bool,
    pub min_eig_above_simple_bound: bool,
    pub mixed_root_is_min: bool,
    pub global_gap_above_bound: bool,
    pub global_gap_above_bound_mn: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralReport {
    pub shape: LatticeShape,
    pub dim: usize,
    pub e0: f64,
    pub gap: f64,
    pub ground_degeneracy: usize,
    pub v_full: usize,
    pub v_bulk: usize,
    /// Minimum of the global gap expression with the full-plaquette `V`.
    pub global_bound: f64,
    /// Same with `4mn`.
    pub global_bound_mn: f64,
    pub per_sector: Vec<SectorSpectrum>,
    pub checks: BoundChecks,
}

impl SpectralReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

const BOUND_SLACK: f64 = 1e-9;
const DENSE_SECTOR_LIMIT: usize = 2500;

fn quarter_bound(g: f64, four_v: f64) -> f64 {
    g / (four_v * (1.0 + g))
}

fn low_spectrum(op: &SparseOperator, members: &[u64], count: usize) -> Result<Vec<f64>> {
    if members.len() <= DENSE_SECTOR_LIMIT {
        let (vals, _) = eigh(&op.restrict_dense(members));
        Ok(vals.into_iter().take(count).collect())
    } else {
        let sub = op.restrict(members);
        Ok(ground_state(&sub, count, &EigenOptions::default())?.values)
    }
}

/// Restrict the parent Hamiltonian to every rule-graph class and evaluate
/// the analytic gap bounds against the measured spectra.
pub fn sector_spectra(shape: LatticeShape) -> Result<SpectralReport> {
    let parts = assemble_parts(shape)?;
    let part = sector_partition(shape)?;
    let loops = parts.local_loops.diagonal();
    let viol = parts.constraints.diagonal();
    let v_full = shape.num_plaquettes();
    let v_bulk = shape.num_bulk();
    let four_v = 4.0 * v_full as f64;
    let four_mn = 4.0 * (shape.m * shape.n) as f64;
    let mut per_sector = Vec::with_capacity(part.classes.len());
    for (members, label) in part.classes.iter().zip(&part.labels) {
        let low = low_spectrum(&parts.total, members, 3)?;
        let lap = low_spectrum(&parts.laplacian, members, 2)?;
        let laplacian_gap = lap.get(1).copied();
        let nonzero_loops: Vec<f64> = members
            .iter()
            .map(|&x| loops[x as usize])
            .filter(|&c| c > 0.0)
            .collect();
        let local_loop_gap = nonzero_loops.iter().copied().reduce(f64::min);
        let frac = nonzero_loops.len() as f64 / members.len() as f64;
        let (projector_bound, candidates) = match (laplacian_gap, local_loop_gap) {
            (Some(a), Some(b)) => {
                let h = 0.5 * (a + b);
                let root = h - (h * h - a * b * frac).max(0.0).sqrt();
                (Some(root), Some([a, b, root]))
            }
            _ => (None, None),
        };
        let simple = laplacian_gap.map(|g| quarter_bound(g, four_v));
        per_sector.push(SectorSpectrum {
            label: label.clone(),
            size: members.len(),
            min_eig: low[0],
            low_eigs: low,
            laplacian_gap,
            local_loop_gap,
            local_loop_fraction: frac,
            violations: viol[members[0] as usize] as usize,
            projector_bound,
            projector_candidates: candidates,
            simple_bound: simple,
            simple_bound_bulk: laplacian_gap.map(|g| quarter_bound(g, 4.0 * v_bulk as f64)),
            bound_mn: laplacian_gap.map(|g| quarter_bound(g, four_mn)),
        });
    }

    let mut all: Vec<f64> = per_sector.iter().flat_map(|s| s.low_eigs.clone()).collect();
    all.sort_by(f64::total_cmp);
    let e0 = all[0];
    let ground_degeneracy = all.iter().filter(|&&e| e - e0 <= DEGENERACY_TOL).count();
    let gap = all
        .iter()
        .find(|&&e| e - e0 > DEGENERACY_TOL)
        .map_or(f64::INFINITY, |&e| e - e0);

    let is_multi = |s: &SectorSpectrum| matches!(s.label, SectorLabel::Multiloop { .. });
    let is_hc = |s: &SectorSpectrum| matches!(s.label, SectorLabel::HamiltonianCycles);
    let hc_gap = per_sector
        .iter()
        .filter(|s| is_hc(s))
        .filter_map(|s| s.laplacian_gap)
        .fold(f64::INFINITY, f64::min);
    let global = |sel: fn(&SectorSpectrum) -> Option<f64>| {
        per_sector
            .iter()
            .filter(|s| is_multi(s))
            .filter_map(sel)
            .fold(hc_gap.min(1.0), f64::min)
    };
    let global_bound = global(|s| s.simple_bound);
    let global_bound_mn = global(|s| s.bound_mn);

    let multis: Vec<&SectorSpectrum> = per_sector.iter().filter(|s| is_multi(s)).collect();
    let checks = BoundChecks {
        z_sectors_at_least_one: per_sector
            .iter()
            .filter(|s| matches!(s.label, SectorLabel::NonTwoFactor { .. }))
            .all(|s| s.min_eig >= 1.0 - BOUND_SLACK),
        fractions_above_quarter_v: multis
            .iter()
            .all(|s| s.local_loop_fraction >= 1.0 / four_v),
        fractions_above_quarter_mn: multis
            .iter()
            .all(|s| s.local_loop_fraction >= 1.0 / four_mn),
        fractions_below_one: multis.iter().all(|s| s.local_loop_fraction < 1.0),
        min_eig_above_projector_bound: multis
            .iter()
            .all(|s| s.projector_bound.map_or(true, |b| s.min_eig >= b - BOUND_SLACK)),
        min_eig_above_simple_bound: multis
            .iter()
            .all(|s| s.simple_bound.map_or(true, |b| s.min_eig >= b - BOUND_SLACK)),
        mixed_root_is_min: multis.iter().all(|s| {
            s.projector_candidates
                .map_or(true, |[a, b, r]| r <= a.min(b) + BOUND_SLACK)
        }),
        global_gap_above_bound: gap >= global_bound - BOUND_SLACK,
        global_gap_above_bound_mn: gap >= global_bound_mn - BOUND_SLACK,
    };
    Ok(SpectralReport {
        shape,
        dim: 1 << shape.num_bulk(),
        e0,
        gap,
        ground_degeneracy,
        v_full,
        v_bulk,
        global_bound,
        global_bound_mn,
        per_sector,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{classify, count_local_loops, DualConfig};
    use crate::rules::rule_graph_degree;

    fn s(m: usize, n: usize) -> LatticeShape {
        LatticeShape::new(m, n).unwrap()
    }

    #[test]
    fn diagonals_match_classify() {
        let shape = s(4, 4);
        let hc = hc_penalty_diagonal(shape).unwrap();
        let hl = local_loop_diagonal(shape).unwrap();
        for x in 0..512u64 {
            let cfg = DualConfig::from_index(shape, x).unwrap();
            assert_eq!(hc[x as usize] as usize, classify(&cfg).c_violations);
            assert_eq!(hl[x as usize] as usize, count_local_loops(&cfg));
        }
        assert_eq!(hc[0], 16.0);
        assert_eq!(hl.iter().copied().filter(|&v| v > 0.0).fold(f64::MAX, f64::min), 1.0);
        // centre plaquette alone
        assert_eq!(hl[1 << 4], 1.0);
    }

    #[test]
    fn laplacian_structure() {
        let shape = s(4, 4);
        let lap = build_laplacian(shape).unwrap();
        assert_eq!(lap.max_asymmetry(), 0.0);
        for x in 0..512usize {
            let cfg = DualConfig::from_index(shape, x as u64).unwrap();
            assert_eq!(lap.get(x, x) as usize, rule_graph_degree(&cfg));
            let row_sum: f64 = lap.row(x).map(|(_, v)| v).sum();
            assert_eq!(row_sum, 0.0);
        }
    }

    #[test]
    fn triplet_round_trip() {
        let op = assemble_hhc(s(2, 5)).unwrap();
        let mut buf = Vec::new();
        op.write_triplets(&mut buf).unwrap();
        let back = SparseOperator::read_triplets(&buf[..]).unwrap();
        assert_eq!(back, op);
        assert!(SparseOperator::read_triplets(&b"4 1\n0 9 1.0\n"[..]).is_err());
    }

    #[test]
    fn lanczos_matches_dense() {
        let op = assemble_hhc(s(4, 5)).unwrap();
        let opts = EigenOptions::default();
        let it = ground_state(&op, 3, &opts).unwrap();
        let dense = EigenOptions {
            dense_limit: 1 << 12,
            ..opts
        };
        let d = ground_state(&op, 3, &dense).unwrap();
        for (a, b) in it.values.iter().zip(&d.values) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn trivial_eigen_cases() {
        let id = SparseOperator::identity(5);
        let r = ground_state(&id, 1, &EigenOptions::default()).unwrap();
        assert!((r.values[0] - 1.0).abs() < 1e-12);
        let diag = SparseOperator::from_diagonal(&[3.0, -1.0, 2.0, 0.5]);
        let r = ground_state(&diag, 4, &EigenOptions::default()).unwrap();
        assert_eq!(r.values.len(), 4);
        for (a, b) in r.values.iter().zip([-1.0, 0.5, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn commutator_vanishes() {
        for shape in [s(2, 4), s(4, 4), s(4, 5)] {
            assert_eq!(constraint_commutator_residual(shape).unwrap(), 0.0);
        }
    }

    #[test]
    fn spectra_4x4() {
        let rep = sector_spectra(s(4, 4)).unwrap();
        assert!(rep.e0.abs() < 1e-10);
        assert_eq!(rep.ground_degeneracy, 1);
        assert!(rep.gap > 0.0);
        let c = &rep.checks;
        assert!(c.z_sectors_at_least_one && c.fractions_above_quarter_v && c.min_eig_above_projector_bound);
        assert!(c.min_eig_above_simple_bound && c.global_gap_above_bound && c.mixed_root_is_min);
        let hc = rep
            .per_sector
            .iter()
            .find(|s| s.label == SectorLabel::HamiltonianCycles)
            .unwrap();
        assert_eq!(hc.size, 6);
        assert!((hc.low_eigs[1] - hc.laplacian_gap.unwrap()).abs() < 1e-10);
        assert!(rep.to_json().unwrap().contains("\"per_sector\""));
    }
}
