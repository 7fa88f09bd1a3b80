//! Dense matrix product states on the snake chain and the measurements taken
//! from them.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use ndarray::{s, Array1, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{DualConfig, LatticeShape, SnakeMap};
use crate::linalg::{qr, svd};
use crate::tn::mpo::Mpo;

/// Single-site operator as `[[<0|O|0>, <0|O|1>], [<1|O|0>, <1|O|1>]]`.
pub type SiteMatrix = [[f64; 2]; 2];

pub const IDENTITY: SiteMatrix = [[1.0, 0.0], [0.0, 1.0]];
pub const PROJ_ONE: SiteMatrix = [[0.0, 0.0], [0.0, 1.0]];
/// `|+><+|`.
pub const PROJ_PLUS: SiteMatrix = [[0.5, 0.5], [0.5, 0.5]];
/// `2|+><+|`, whose product over all sites turns the state overlap with
/// the uniform superposition into a configuration count.
pub const TWICE_PLUS: SiteMatrix = [[1.0, 1.0], [1.0, 1.0]];

/// Tag written into checkpoints so a reader can tell which chain ordering
/// the tensors follow.
pub const SNAKE_VERSION: &str = "boustrophedon-short-side/1";

#[derive(Debug, Clone, PartialEq)]
pub struct Mps {
    pub shape: LatticeShape,
    /// Site tensors `(chi_left, 2, chi_right)` in chain order.
    pub tensors: Vec<Array3<f64>>,
    /// Orthogonality centre, when the chain is in mixed canonical form.
    pub center: Option<usize>,
}

impl Mps {
    pub fn from_tensors(shape: LatticeShape, tensors: Vec<Array3<f64>>) -> Result<Self> {
        if tensors.len() != shape.num_bulk() {
            return Err(Error::Validation(format!(
                "{} tensors for {} bulk sites",
                tensors.len(),
                shape.num_bulk()
            )));
        }
        for (t, a) in tensors.iter().enumerate() {
            let (l, d, r) = a.dim();
            let left_ok = if t == 0 { l == 1 } else { l == tensors[t - 1].dim().2 };
            if d != 2 || !left_ok || (t + 1 == tensors.len() && r != 1) {
                return Err(Error::Validation(format!("tensor {t} has shape {:?}", a.dim())));
            }
        }
        Ok(Mps {
            shape,
            tensors,
            center: None,
        })
    }

    /// Product state of a single configuration.
    pub fn product(cfg: &DualConfig) -> Self {
        let shape = cfg.shape();
        let snake = SnakeMap::new(shape);
        let bulk = cfg.bulk_bits();
        let tensors = (0..shape.num_bulk())
            .map(|t| {
                let mut a = Array3::zeros((1, 2, 1));
                a[[0, bulk[snake.chain_to_bulk(t)] as usize, 0]] = 1.0;
                a
            })
            .collect();
        Mps {
            shape,
            tensors,
            center: Some(0),
        }
    }

    /// Uniform superposition of the given configurations, compressed with
    /// SVD cutoff `tol`.
    pub fn uniform_superposition(
        shape: LatticeShape,
        configs: &[DualConfig],
        tol: f64,
    ) -> Result<Self> {
        if configs.is_empty() {
            return Err(Error::Validation("empty configuration set".into()));
        }
        let snake = SnakeMap::new(shape);
        let len = shape.num_bulk();
        let words: Vec<Vec<u8>> = configs
            .iter()
            .map(|c| {
                let bulk = c.bulk_bits();
                (0..len).map(|t| bulk[snake.chain_to_bulk(t)] as u8).collect()
            })
            .collect();
        // prefix trie, then merge nodes with identical right languages
        const NONE: u32 = u32::MAX;
        let mut children: Vec<Vec<[u32; 2]>> = vec![vec![[NONE; 2]]];
        for w in &words {
            let mut cur = 0usize;
            for t in 0..len {
                if children.len() <= t + 1 {
                    children.push(Vec::new());
                }
                let slot = children[t][cur][w[t] as usize];
                cur = if slot == NONE {
                    let id = children[t + 1].len();
                    children[t + 1].push([NONE; 2]);
                    children[t][cur][w[t] as usize] = id as u32;
                    id
                } else {
                    slot as usize
                };
            }
        }
        let mut canon: Vec<Vec<u32>> = vec![Vec::new(); len + 1];
        canon[len] = vec![0; children[len].len()];
        let mut classes = vec![0usize; len + 1];
        classes[len] = 1;
        for b in (0..len).rev() {
            let mut ids: HashMap<[u32; 2], u32> = HashMap::new();
            canon[b] = children[b]
                .iter()
                .map(|ch| {
                    let key = ch.map(|c| if c == NONE { NONE } else { canon[b + 1][c as usize] });
                    let next = ids.len() as u32;
                    *ids.entry(key).or_insert(next)
                })
                .collect();
            classes[b] = ids.len();
        }
        let mut tensors: Vec<Array3<f64>> = (0..len)
            .map(|t| Array3::zeros((classes[t], 2, classes[t + 1])))
            .collect();
        for t in 0..len {
            for (node, ch) in children[t].iter().enumerate() {
                for bit in 0..2 {
                    if ch[bit] != NONE {
                        let l = canon[t][node] as usize;
                        let r = canon[t + 1][ch[bit] as usize] as usize;
                        tensors[t][[l, bit, r]] = 1.0;
                    }
                }
            }
        }
        let scale = 1.0 / (configs.len() as f64).sqrt();
        tensors[0].mapv_inplace(|x| x * scale);
        let mut mps = Mps {
            shape,
            tensors,
            center: None,
        };
        mps.compress(usize::MAX, tol);
        Ok(mps)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Bond dimensions of the `len - 1` inner bonds.
    pub fn bond_dims(&self) -> Vec<usize> {
        self.tensors[..self.len().saturating_sub(1)]
            .iter()
            .map(|a| a.dim().2)
            .collect()
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    /// Full state vector in the bulk-index basis.
    pub fn to_dense(&self) -> Result<Vec<f64>> {
        let n = self.len();
        if n > 24 {
            return Err(Error::ResourceLimit {
                what: "sites for dense state expansion",
                limit: 24,
                requested: n,
            });
        }
        let snake = SnakeMap::new(self.shape);
        // rows: chain prefix bits, cols: right bond
        let mut acc: Array2<f64> = Array2::from_elem((1, 1), 1.0);
        for (t, a) in self.tensors.iter().enumerate() {
            let (_, _, r) = a.dim();
            let mut next = Array2::zeros((acc.nrows() * 2, r));
            for s in 0..2usize {
                let part = acc.dot(&a.slice(s![.., s, ..]));
                for (p, row) in part.rows().into_iter().enumerate() {
                    next.row_mut(p | (s << t)).assign(&row);
                }
            }
            acc = next;
        }
        let mut out = vec![0.0; 1 << n];
        for chain_bits in 0..(1usize << n) {
            let x = (0..n).fold(0usize, |x, t| x | ((chain_bits >> t) & 1) << snake.chain_to_bulk(t));
            out[x] = acc[[chain_bits, 0]];
        }
        Ok(out)
    }

    pub fn norm_sq(&self) -> f64 {
        self.expect_unnormalized(&BTreeMap::new())
    }

    pub fn normalize(&mut self) -> f64 {
        let n = self.norm_sq().sqrt();
        if n > 0.0 {
            let k = self.center.unwrap_or(0);
            self.tensors[k].mapv_inplace(|x| x / n);
        }
        n
    }

    fn move_right(&mut self, t: usize) {
        let a = &self.tensors[t];
        let (l, _, r) = a.dim();
        let m = a.to_shape((l * 2, r)).unwrap().to_owned();
        let (q, rr) = qr(&m);
        let k = q.ncols();
        self.tensors[t] = q.into_shape_with_order((l, 2, k)).unwrap();
        let next = &self.tensors[t + 1];
        let (_, _, r2) = next.dim();
        let nm = next.to_shape((r, 2 * r2)).unwrap().to_owned();
        self.tensors[t + 1] = rr.dot(&nm).into_shape_with_order((k, 2, r2)).unwrap();
    }

    fn move_left(&mut self, t: usize) {
        let a = &self.tensors[t];
        let (l, _, r) = a.dim();
        let m = a.to_shape((l, 2 * r)).unwrap().to_owned();
        let (q, rr) = qr(&m.t().to_owned());
        let k = q.ncols();
        self.tensors[t] = q.t().as_standard_layout().into_owned().into_shape_with_order((k, 2, r)).unwrap();
        let prev = &self.tensors[t - 1];
        let (l0, _, _) = prev.dim();
        let pm = prev.to_shape((l0 * 2, l)).unwrap().to_owned();
        self.tensors[t - 1] = pm.dot(&rr.t()).into_shape_with_order((l0, 2, k)).unwrap();
    }

    /// Bring the chain into mixed canonical form around `center`.
    pub fn canonicalize(&mut self, center: usize) {
        for t in 0..center {
            self.move_right(t);
        }
        for t in (center + 1..self.len()).rev() {
            self.move_left(t);
        }
        self.center = Some(center);
    }

    /// Largest deviation from the isometry condition over off-centre sites.
    pub fn isometry_residual(&self) -> f64 {
        let Some(c) = self.center else {
            return f64::INFINITY;
        };
        let mut worst = 0.0f64;
        for (t, a) in self.tensors.iter().enumerate() {
            let (l, _, r) = a.dim();
            let g = if t < c {
                let m = a.to_shape((l * 2, r)).unwrap();
                m.t().dot(&m)
            } else if t > c {
                let m = a.to_shape((l, 2 * r)).unwrap();
                m.dot(&m.t())
            } else {
                continue;
            };
            for ((i, j), v) in g.indexed_iter() {
                worst = worst.max((v - (i == j) as u8 as f64).abs());
            }
        }
        worst
    }

    /// Truncate every bond to at most `chi` states, dropping singular values
    /// below `cutoff` times the largest on that bond. Returns the discarded
    /// weight relative to the squared norm. Leaves the centre at site 0.
    pub fn compress(&mut self, chi: usize, cutoff: f64) -> f64 {
        let n = self.len();
        self.canonicalize(n - 1);
        let norm_sq: f64 = self.tensors[n - 1].iter().map(|x| x * x).sum();
        let mut discarded = 0.0;
        for t in (1..n).rev() {
            let a = &self.tensors[t];
            let (l, _, r) = a.dim();
            let m = a.to_shape((l, 2 * r)).unwrap().to_owned();
            let (u, sv, vt) = svd(&m);
            let smax = sv.iter().fold(0.0f64, |a, &x| a.max(x));
            let mut keep = 0;
            for (k, &x) in sv.iter().enumerate() {
                if k < chi && x > cutoff * smax {
                    keep += 1;
                } else {
                    discarded += x * x;
                }
            }
            let keep = keep.max(1);
            self.tensors[t] = vt
                .slice(s![..keep, ..])
                .to_owned()
                .into_shape_with_order((keep, 2, r))
                .unwrap();
            let us = &u.slice(s![.., ..keep]) * &sv.slice(s![..keep]);
            let prev = &self.tensors[t - 1];
            let (l0, _, _) = prev.dim();
            let pm = prev.to_shape((l0 * 2, l)).unwrap().to_owned();
            self.tensors[t - 1] = pm.dot(&us).into_shape_with_order((l0, 2, keep)).unwrap();
        }
        self.center = Some(0);
        if norm_sq > 0.0 {
            discarded / norm_sq
        } else {
            0.0
        }
    }

    fn expect_unnormalized(&self, ops: &BTreeMap<usize, SiteMatrix>) -> f64 {
        let mut env: Array2<f64> = Array2::from_elem((1, 1), 1.0);
        for (t, a) in self.tensors.iter().enumerate() {
            let op = ops.get(&t).copied().unwrap_or(IDENTITY);
            let (_, _, r) = a.dim();
            let mut next = Array2::zeros((r, r));
            for so in 0..2usize {
                let bra = a.slice(s![.., so, ..]);
                let left = bra.t().dot(&env);
                for si in 0..2 {
                    let o = op[so][si];
                    if o == 0.0 {
                        continue;
                    }
                    let ket = a.slice(s![.., si, ..]);
                    next.scaled_add(o, &left.dot(&ket));
                }
            }
            env = next;
        }
        env[[0, 0]]
    }

    /// `<psi| prod_s O_s |psi> / <psi|psi>`, identity on unmapped sites.
    pub fn expect_product(&self, ops: &BTreeMap<usize, SiteMatrix>) -> f64 {
        self.expect_unnormalized(ops) / self.norm_sq()
    }

    /// The same operator on every site.
    pub fn expect_uniform(&self, op: SiteMatrix) -> f64 {
        let ops = (0..self.len()).map(|t| (t, op)).collect();
        self.expect_product(&ops)
    }

    /// `<config|psi>`.
    pub fn amplitude(&self, cfg: &DualConfig) -> Result<f64> {
        if cfg.shape() != self.shape {
            return Err(Error::Validation(format!(
                "config shape {} does not match state shape {}",
                cfg.shape(),
                self.shape
            )));
        }
        let snake = SnakeMap::new(self.shape);
        let bulk = cfg.bulk_bits();
        let mut v = Array1::from_elem(1, 1.0);
        for (t, a) in self.tensors.iter().enumerate() {
            let s = bulk[snake.chain_to_bulk(t)] as usize;
            v = v.dot(&a.slice(s![.., s, ..]));
        }
        Ok(v[0])
    }

    /// Born probability of a configuration.
    pub fn probability(&self, cfg: &DualConfig) -> Result<f64> {
        Ok(self.amplitude(cfg)?.powi(2) / self.norm_sq())
    }

    /// Independent samples from the Born distribution by sequential
    /// single-site measurement on the right-canonical form.
    pub fn sample(&self, n_samples: usize, seed: u64) -> Result<Vec<DualConfig>> {
        let norm = self.norm_sq();
        if (norm - 1.0).abs() > 1e-8 {
            return Err(Error::Validation(format!(
                "state must be normalized before sampling (norm^2 = {norm})"
            )));
        }
        let mut rc = self.clone();
        rc.canonicalize(0);
        let snake = SnakeMap::new(self.shape);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(n_samples);
        for _ in 0..n_samples {
            let mut bulk = vec![false; self.len()];
            let mut env: Array1<f64> = Array1::from_elem(1, 1.0);
            for (t, a) in rc.tensors.iter().enumerate() {
                let v0 = env.dot(&a.slice(s![.., 0usize, ..]));
                let v1 = env.dot(&a.slice(s![.., 1usize, ..]));
                let p0 = v0.dot(&v0);
                let p1 = v1.dot(&v1);
                let one = rng.gen::<f64>() * (p0 + p1) >= p0;
                let (v, p) = if one { (v1, p1) } else { (v0, p0) };
                env = v / p.sqrt();
                bulk[snake.chain_to_bulk(t)] = one;
            }
            out.push(DualConfig::from_bulk_bits(self.shape, &bulk)?);
        }
        Ok(out)
    }

    /// Schmidt values across each inner bond, for a normalized copy.
    pub fn schmidt_values(&self) -> Vec<Vec<f64>> {
        let mut a = self.clone();
        a.canonicalize(0);
        let n = a.len();
        let mut out = Vec::with_capacity(n.saturating_sub(1));
        for t in 0..n.saturating_sub(1) {
            let x = &a.tensors[t];
            let (l, _, r) = x.dim();
            let m = x.to_shape((l * 2, r)).unwrap().to_owned();
            let (u, sv, vt) = svd(&m);
            let total: f64 = sv.iter().map(|v| v * v).sum();
            out.push(sv.iter().map(|v| v / total.sqrt()).collect());
            let k = sv.len();
            a.tensors[t] = u.into_shape_with_order((l, 2, k)).unwrap();
            let svt = &vt * &sv.view().insert_axis(ndarray::Axis(1));
            let next = &a.tensors[t + 1];
            let (_, _, r2) = next.dim();
            let nm = next.to_shape((r, 2 * r2)).unwrap().to_owned();
            a.tensors[t + 1] = svt.dot(&nm).into_shape_with_order((k, 2, r2)).unwrap();
        }
        out
    }

    /// Von Neumann entropy (natural log) at each inner bond.
    pub fn entropies(&self) -> Vec<f64> {
        self.schmidt_values()
            .iter()
            .map(|sv| {
                sv.iter()
                    .map(|s| s * s)
                    .filter(|&p| p > 0.0)
                    .map(|p| -p * p.ln())
                    .sum()
            })
            .collect()
    }

    /// `<psi|H|psi> / <psi|psi>` for an MPO on the same chain.
    pub fn energy(&self, mpo: &Mpo) -> Result<f64> {
        if mpo.len() != self.len() {
            return Err(Error::Validation("MPO and MPS lengths differ".into()));
        }
        // env[w] is (bra bond x ket bond)
        let mut env: Vec<Array2<f64>> = vec![Array2::from_elem((1, 1), 1.0)];
        for (t, a) in self.tensors.iter().enumerate() {
            let dr = mpo.bond_charges[t + 1].len();
            let (_, _, r) = a.dim();
            let mut next = vec![Array2::<f64>::zeros((r, r)); dr];
            for e in &mpo.sites[t] {
                let l = &env[e.wl as usize];
                let bra = a.slice(s![.., e.out as usize, ..]);
                let ket = a.slice(s![.., e.inp as usize, ..]);
                let part = bra.t().dot(l).dot(&ket);
                next[e.wr as usize].scaled_add(e.val, &part);
            }
            env = next;
        }
        Ok(env[0][[0, 0]] / self.norm_sq())
    }

    pub fn to_checkpoint(&self, chi: usize) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: 1,
            shape: self.shape,
            snake: SNAKE_VERSION.to_string(),
            chi,
            norm: self.norm_sq().sqrt(),
            tensors: self
                .tensors
                .iter()
                .map(|a| StoredTensor {
                    dims: [a.dim().0, a.dim().1, a.dim().2],
                    data: a.iter().copied().collect(),
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(cp: &Checkpoint) -> Result<Self> {
        if cp.format != CHECKPOINT_FORMAT || cp.version != 1 {
            return Err(Error::Format(format!(
                "unsupported checkpoint format {} v{}",
                cp.format, cp.version
            )));
        }
        if cp.snake != SNAKE_VERSION {
            return Err(Error::Format(format!("unknown snake ordering '{}'", cp.snake)));
        }
        let mut tensors = Vec::with_capacity(cp.tensors.len());
        for (t, st) in cp.tensors.iter().enumerate() {
            let a = Array3::from_shape_vec((st.dims[0], st.dims[1], st.dims[2]), st.data.clone())
                .map_err(|e| Error::Format(format!("tensor {t}: {e}")))?;
            tensors.push(a);
        }
        Mps::from_tensors(cp.shape, tensors).map_err(|e| Error::Format(e.to_string()))
    }

    /// Write a checkpoint atomically (temporary file, then rename).
    pub fn save(&self, path: &Path, chi: usize) -> Result<()> {
        let text = serde_json::to_string(&self.to_checkpoint(chi))?;
        crate::io::write_atomic(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cp: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        Mps::from_checkpoint(&cp)
    }
}

pub const CHECKPOINT_FORMAT: &str = "hamcycle-mps";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoredTensor {
    pub dims: [usize; 3],
    pub data: Vec<f64>,
}

/// Self-describing text dump of an MPS.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub shape: LatticeShape,
    pub snake: String,
    pub chi: usize,
    pub norm: f64,
    pub tensors: Vec<StoredTensor>,
}

/// `2^N <psi| prod 2|+><+| |psi>`: the number of configurations for a
/// uniform superposition over them.
pub fn count_from_mps(mps: &Mps) -> f64 {
    mps.expect_uniform(TWICE_PLUS)
}

/// Relative count error `|estimate - exact| / exact`.
pub fn relative_error(estimate: f64, exact: f64) -> f64 {
    (estimate - exact).abs() / exact
}

/// Entanglement entropy per bond, with the curve normalized by the shorter
/// lattice side against the fractional chain position.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntropyProfile {
    pub entropy: Vec<f64>,
    pub s_over_m: Vec<f64>,
    /// Bond position `v / (number of sites)`, `v = 1..len-1`.
    pub position: Vec<f64>,
    pub max_s_over_m: f64,
}

pub fn entropy_profile(mps: &Mps) -> EntropyProfile {
    let entropy = mps.entropies();
    let m = mps.shape.m.min(mps.shape.n) as f64;
    let len = mps.len() as f64;
    let s_over_m: Vec<f64> = entropy.iter().map(|s| s / m).collect();
    EntropyProfile {
        position: (1..=entropy.len()).map(|v| v as f64 / len).collect(),
        max_s_over_m: s_over_m.iter().copied().fold(0.0, f64::max),
        entropy,
        s_over_m,
    }
}
