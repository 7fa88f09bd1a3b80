//! Acceptance checks, one line per criterion. Run with
//! `cargo test -p hamcycle --test acceptance`.
//!
//! Criterion 12 is reported but does not affect the exit status.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::time::Instant;

use hamcycle::count::{
    boltzmann_brute_force, brute_force_count, brute_force_cycles, enumerate_cycles,
    transfer_matrix_count, CountMethod,
};
use hamcycle::exact::{assemble_hhc, local_terms, sector_spectra};
use hamcycle::lattice::{extract_edges, Vertex};
use hamcycle::protocols::{
    amplify_count, boltzmann_mps, dress, fit_exponent, heteropolymer_partition, BoltzmannOptions,
    ChemicalSequence, ContactModel, CountSource, EnergyModel,
};
use hamcycle::tn::{
    build_mpo_hhc, build_mpo_hhc_sparse, count_from_mps, dmrg, entropy_profile, quality_report,
    CountTarget, DmrgOptions, DmrgResult, Mps,
};
use hamcycle::{DualConfig, LatticeShape};
use statrs::distribution::{ChiSquared, ContinuousCDF};

type Check = Result<(bool, String), String>;

const SEED: u64 = 0x5eed;

fn shape(m: usize, n: usize) -> LatticeShape {
    LatticeShape::new(m, n).unwrap()
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Converged ground states shared between criteria.
#[derive(Default)]
struct Cache {
    states: BTreeMap<(usize, usize), DmrgResult>,
    seconds: BTreeMap<(usize, usize), f64>,
}

impl Cache {
    fn ground(&mut self, m: usize, n: usize) -> Result<&DmrgResult, String> {
        if !self.states.contains_key(&(m, n)) {
            let t = Instant::now();
            let mpo = build_mpo_hhc_sparse(shape(m, n)).map_err(err)?;
            let res = dmrg(&mpo, &DmrgOptions::default()).map_err(err)?;
            self.seconds.insert((m, n), t.elapsed().as_secs_f64());
            self.states.insert((m, n), res);
        }
        Ok(&self.states[&(m, n)])
    }
}

fn exact(m: usize, n: usize) -> Result<f64, String> {
    Ok(transfer_matrix_count(shape(m, n)).map_err(err)?.as_f64())
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn c1_counts() -> Check {
    let table: [(usize, usize, u64); 7] = [
        (6, 4, 37),
        (6, 6, 1072),
        (6, 8, 32675),
        (6, 10, 1024028),
        (6, 12, 32463802),
        (4, 4, 6),
        (8, 8, 4638576),
    ];
    let mut ok = true;
    let mut slowest = 0.0f64;
    let mut bad = Vec::new();
    for (m, n, want) in table {
        let t = Instant::now();
        let got = transfer_matrix_count(shape(m, n)).map_err(err)?.count;
        let secs = t.elapsed().as_secs_f64();
        slowest = slowest.max(secs);
        if got != want.into() || secs >= 60.0 {
            ok = false;
            bad.push(format!("{m}x{n}={got} in {secs:.1}s"));
        }
    }
    Ok((ok, format!("7 shapes, slowest {slowest:.2}s {}", bad.join(" "))))
}

fn c2_oracle() -> Check {
    let mut shapes = 0;
    let mut bad = Vec::new();
    for m in 2..=25 {
        for n in 2..=25 {
            if (m - 1) * (n - 1) > 24 || m.min(n) > 12 {
                continue;
            }
            let s = shape(m, n);
            let a = brute_force_count(s).map_err(err)?.count;
            let b = transfer_matrix_count(s).map_err(err)?.count;
            shapes += 1;
            if a != b {
                bad.push(format!("{s}: {a} vs {b}"));
            }
        }
    }
    Ok((bad.is_empty(), format!("{shapes} shapes {}", bad.join(" "))))
}

fn c3_spectrum() -> Check {
    let s = shape(4, 4);
    let h = assemble_hhc(s).map_err(err)?.to_dense();
    let (vals, vecs) = hamcycle::linalg::eigh(&h);
    let degeneracy = vals.iter().filter(|v| v.abs() < 1e-8).count();
    let ground: Vec<f64> = vecs.column(0).to_vec();
    let cycles: BTreeSet<u64> = brute_force_cycles(s).map_err(err)?.into_iter().collect();
    let sign = ground[*cycles.iter().next().unwrap() as usize].signum();
    let amp = 1.0 / (cycles.len() as f64).sqrt();
    let amp_dev = ground
        .iter()
        .enumerate()
        .map(|(x, v)| {
            let want = if cycles.contains(&(x as u64)) { amp } else { 0.0 };
            (sign * v - want).abs()
        })
        .fold(0.0, f64::max);
    let terms = local_terms(s).map_err(err)?;
    let residual = terms
        .iter()
        .map(|t| t.apply(&ground).iter().map(|x| x.abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    let ok = h.nrows() == 512
        && vals[0].abs() < 1e-10
        && degeneracy == 1
        && cycles.len() == 6
        && amp_dev < 1e-8
        && residual < 1e-8;
    Ok((
        ok,
        format!(
            "dim {} e0 {:.1e} e1 {:.3} degeneracy {degeneracy} amplitude dev {amp_dev:.1e} \
             max term residual {residual:.1e} over {} terms",
            h.nrows(),
            vals[0],
            vals[1],
            terms.len()
        ),
    ))
}

fn c4_sectors() -> Check {
    let mut ok = true;
    let mut parts = Vec::new();
    for (m, n) in [(4, 4), (2, 6)] {
        let rep = sector_spectra(shape(m, n)).map_err(err)?;
        let c = &rep.checks;
        let pass = c.z_sectors_at_least_one
            && c.fractions_above_quarter_v
            && c.min_eig_above_projector_bound
            && c.global_gap_above_bound;
        ok &= pass;
        parts.push(format!(
            "{m}x{n}: {} sectors gap {:.4} bound {:.2e} z>=1 {} frac {} projector {} global {}",
            rep.per_sector.len(),
            rep.gap,
            rep.global_bound,
            c.z_sectors_at_least_one,
            c.fractions_above_quarter_v,
            c.min_eig_above_projector_bound,
            c.global_gap_above_bound
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn c5_mpo() -> Check {
    let mut worst = 0.0f64;
    for (m, n) in [(2, 4), (4, 4)] {
        let s = shape(m, n);
        let h = assemble_hhc(s).map_err(err)?.to_dense();
        for mpo in [build_mpo_hhc(s, 1e-12), build_mpo_hhc_sparse(s)] {
            let d = mpo.map_err(err)?.to_dense().map_err(err)?;
            if d.dim() != h.dim() {
                return Ok((false, format!("{s}: dims {:?} vs {:?}", d.dim(), h.dim())));
            }
            let diff = (&d - &h).iter().map(|x| x.abs()).fold(0.0, f64::max);
            worst = worst.max(diff);
        }
    }
    Ok((worst < 1e-10, format!("max entry difference {worst:.2e}")))
}

fn c6_dmrg(cache: &mut Cache) -> Check {
    let mut ok = true;
    let mut parts = Vec::new();
    for n in [4, 6, 8, 10] {
        let tol = if n == 6 { 1e-4 } else { 1e-3 };
        let want = exact(6, n)?;
        let res = cache.ground(6, n)?;
        let mut eps = rel(count_from_mps(&res.mps), want);
        let mut chi = res.mps.max_bond();
        let mut secs = cache.seconds[&(6, n)];
        if eps >= tol {
            // retry with a larger final bond dimension
            let t = Instant::now();
            let opts = DmrgOptions {
                chi_schedule: vec![16, 32, 64, 128],
                ..Default::default()
            };
            let mpo = build_mpo_hhc_sparse(shape(6, n)).map_err(err)?;
            let r = dmrg(&mpo, &opts).map_err(err)?;
            eps = rel(count_from_mps(&r.mps), want);
            chi = r.mps.max_bond();
            secs = t.elapsed().as_secs_f64();
        }
        let pass = eps < tol && chi <= 128 && secs < 600.0;
        ok &= pass;
        parts.push(format!("6x{n} eps {eps:.1e} chi {chi} {secs:.0}s"));
    }
    Ok((ok, parts.join("; ")))
}

fn c7_sampling(cache: &mut Cache) -> Check {
    let res = cache.ground(6, 6)?;
    let rep = quality_report(&res.mps, None, 1000, SEED, Some(exact(6, 6)?)).map_err(err)?;
    let mean = rep.mean_cycles.unwrap_or(f64::NAN);
    let dmrg_ok = rep.multiloop_prob <= 0.02 && (1.0..=1.05).contains(&mean);

    let s = shape(4, 4);
    let cycles = enumerate_cycles(s, 100).map_err(err)?;
    let mps = Mps::uniform_superposition(s, &cycles, 1e-12).map_err(err)?;
    let draws = mps.sample(6000, SEED).map_err(err)?;
    let mut hist: HashMap<Option<u64>, usize> = HashMap::new();
    for d in &draws {
        *hist.entry(d.index()).or_default() += 1;
    }
    let outside: usize = hist
        .iter()
        .filter(|(k, _)| !cycles.iter().any(|c| c.index() == **k))
        .map(|(_, v)| v)
        .sum();
    let expected = draws.len() as f64 / cycles.len() as f64;
    let stat: f64 = cycles
        .iter()
        .map(|c| {
            let o = *hist.get(&c.index()).unwrap_or(&0) as f64;
            (o - expected).powi(2) / expected
        })
        .sum();
    let dist = ChiSquared::new((cycles.len() - 1) as f64).map_err(err)?;
    let p = 1.0 - dist.cdf(stat);
    let chi_ok = outside == 0 && p > 0.001;
    Ok((
        dmrg_ok && chi_ok,
        format!(
            "6x6 multiloop {:.3} mean cycles {mean:.4}; 4x4 chi2 {stat:.2} p {p:.3} outside {outside}",
            rep.multiloop_prob
        ),
    ))
}

/// Linear interpolation of `(x, y)` samples at `x0`.
fn interpolate(xs: &[f64], ys: &[f64], x0: f64) -> f64 {
    let k = xs.partition_point(|&x| x < x0).clamp(1, xs.len() - 1);
    let t = (x0 - xs[k - 1]) / (xs[k] - xs[k - 1]);
    ys[k - 1] + t * (ys[k] - ys[k - 1])
}

fn c8_entropy(cache: &mut Cache) -> Check {
    let mut profiles = Vec::new();
    for n in [8, 10, 12] {
        profiles.push((n, entropy_profile(&cache.ground(6, n)?.mps)));
    }
    let maxes: Vec<f64> = profiles.iter().map(|p| p.1.max_s_over_m).collect();
    let hi = maxes.iter().copied().fold(f64::MIN, f64::max);
    let lo = maxes.iter().copied().fold(f64::MAX, f64::min);
    let spread = (hi - lo) / lo;
    let mut overlay = 0.0f64;
    for (_, a) in &profiles {
        for (_, b) in &profiles {
            for (x, y) in a.position.iter().zip(&a.s_over_m) {
                if (0.25..=0.75).contains(x) {
                    let d = (y - interpolate(&b.position, &b.s_over_m, *x)).abs();
                    overlay = overlay.max(d);
                }
            }
        }
    }
    let max_list: Vec<String> = profiles
        .iter()
        .map(|(n, p)| format!("6x{n} {:.4}", p.max_s_over_m))
        .collect();
    Ok((
        spread < 0.15 && overlay < 0.1,
        format!(
            "max S/m {} spread {spread:.3}; bulk overlay {overlay:.3}",
            max_list.join(" ")
        ),
    ))
}

fn c9_boltzmann() -> Check {
    let s = shape(4, 4);
    let cycles = enumerate_cycles(s, 100).map_err(err)?;
    let mps = Mps::uniform_superposition(s, &cycles, 1e-12).map_err(err)?;
    let model = EnergyModel::Bend { epsilon: 1.0 };
    let count = CountSource::Exact {
        value: cycles.len() as f64,
        method: CountMethod::Transfer,
    };
    let mut worst = 0.0f64;
    let mut zero_exact = false;
    let mut parts = Vec::new();
    for beta in [0.0, 0.5, 1.0] {
        let r = boltzmann_mps(&mps, &model, beta, count, &BoltzmannOptions::default())
            .map_err(err)?;
        let brute = boltzmann_brute_force(s, &model, beta).map_err(err)?.partition;
        if beta == 0.0 {
            zero_exact = r.z_estimate == 6.0;
        }
        let e = rel(r.z_estimate, brute);
        worst = worst.max(e);
        parts.push(format!("Z({beta})={:.6}", r.z_estimate));
    }
    Ok((
        worst < 1e-6 && zero_exact,
        format!("{} max rel err {worst:.1e}", parts.join(" ")),
    ))
}

/// Hamiltonian cycle as a vertex sequence, rebuilt from its edge set.
fn walk(cfg: &DualConfig) -> Vec<Vertex> {
    let mut adj: HashMap<Vertex, Vec<Vertex>> = HashMap::new();
    for e in extract_edges(cfg) {
        adj.entry(e.a).or_default().push(e.b);
        adj.entry(e.b).or_default().push(e.a);
    }
    let start = (0, 0);
    let mut out = vec![start];
    let mut prev = start;
    let mut cur = adj[&start][0];
    while cur != start {
        out.push(cur);
        let next = if adj[&cur][0] == prev { adj[&cur][1] } else { adj[&cur][0] };
        prev = cur;
        cur = next;
    }
    out
}

/// Sum over cycles, starting vertices and directions of `exp(-beta E)` with
/// `E = -(# H-H grid neighbours not adjacent in the sequence)`.
fn hp_oracle(s: LatticeShape, seq: &str, beta: f64) -> Result<f64, String> {
    let seq: Vec<char> = seq.chars().collect();
    let len = seq.len();
    let mut z = 0.0;
    for idx in brute_force_cycles(s).map_err(err)? {
        let w = walk(&DualConfig::from_index(s, idx).map_err(err)?);
        for start in 0..len {
            for dir in [1isize, -1] {
                let mut pos: HashMap<Vertex, usize> = HashMap::new();
                for k in 0..len {
                    let at = (start as isize + dir * k as isize).rem_euclid(len as isize);
                    pos.insert(w[at as usize], k);
                }
                let mut e = 0.0;
                for (&(i, j), &k) in &pos {
                    for nb in [(i + 1, j), (i, j + 1)] {
                        if let Some(&l) = pos.get(&nb) {
                            if k.abs_diff(l) != 1 && seq[k] == 'H' && seq[l] == 'H' {
                                e -= 1.0;
                            }
                        }
                    }
                }
                z += (-beta * e).exp();
            }
        }
    }
    Ok(z)
}

fn c10_dressing() -> Check {
    let mut ok = true;
    let mut parts = Vec::new();
    for (m, n, text, terms_want) in [(2, 4, "HPPHHPHP", 16), (4, 4, "HHPPHPHHPPHPHHHP", 192)] {
        let s = shape(m, n);
        let seq = ChemicalSequence::parse(text).map_err(err)?;
        let ens = dress(s, &seq).map_err(err)?;
        let triples: BTreeSet<_> = ens
            .terms
            .iter()
            .map(|t| (t.cycle, t.start, t.orientation))
            .collect();
        let amp = 1.0 / (ens.terms.len() as f64).sqrt();
        let amp_dev = ens
            .terms
            .iter()
            .map(|t| (t.amplitude - amp).abs())
            .fold(0.0, f64::max);
        let weight = ens.total_weight();
        let mut z_err = 0.0f64;
        for beta in [0.0, 0.7, 1.5] {
            let z = heteropolymer_partition(&ens, &ContactModel::hp(), beta).map_err(err)?;
            z_err = z_err.max(rel(z.z_unnormalized, hp_oracle(s, text, beta)?));
        }
        let pass = ens.terms.len() == terms_want
            && triples.len() == terms_want
            && amp_dev < 1e-10
            && (weight - 1.0).abs() < 1e-10
            && z_err < 1e-10;
        ok &= pass;
        parts.push(format!(
            "{m}x{n}: {} terms, {} triples, amp dev {amp_dev:.1e}, weight {weight:.12}, Z_hp rel err {z_err:.1e}",
            ens.terms.len(),
            triples.len()
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn c11_amplify() -> Check {
    let run = amplify_count(shape(4, 4), 20).map_err(err)?;
    let theta = run.r.sqrt().asin();
    let dev = run
        .trace
        .iter()
        .map(|st| (st.p - ((2 * st.k + 1) as f64 * theta).sin().powi(2)).abs())
        .fold(0.0, f64::max);
    let runs = [(2, 4), (2, 6), (4, 4)]
        .iter()
        .map(|&(m, n)| amplify_count(shape(m, n), 20))
        .collect::<Result<Vec<_>, _>>()
        .map_err(err)?;
    let slope = fit_exponent(&runs).map_err(err)?;
    let covers = run.trace.iter().any(|st| st.k == 20);
    let ok = covers
        && dev < 1e-8
        && (run.r - 6.0 / 512.0).abs() < 1e-15
        && run.k_opt == 7
        && run.p_opt > 0.99
        && (slope + 0.5).abs() <= 0.1;
    Ok((
        ok,
        format!(
            "max dev {dev:.1e}; k_opt {} p {:.4}; exponent {slope:.3}",
            run.k_opt, run.p_opt
        ),
    ))
}

/// Least-squares slope of `log y` against `log x`.
fn loglog_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let lx: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn c12_scaling() -> Check {
    let mut pts = Vec::new();
    let mut parts = Vec::new();
    for n in (8..=20).step_by(2) {
        let want = exact(6, n)?;
        let opts = DmrgOptions {
            count_target: Some(CountTarget {
                exact: want,
                rel_eps: 0.005,
            }),
            ..Default::default()
        };
        let mpo = build_mpo_hhc_sparse(shape(6, n)).map_err(err)?;
        let res = dmrg(&mpo, &opts).map_err(err)?;
        let secs: f64 = res.trace.iter().map(|r| r.seconds).sum();
        if !res.reached_target {
            parts.push(format!("6x{n} missed"));
            continue;
        }
        parts.push(format!("6x{n} {secs:.1}s"));
        pts.push((n as f64, secs));
    }
    if pts.len() < 2 {
        return Ok((false, parts.join(" ")));
    }
    let slope = loglog_slope(&pts);
    let ok = pts.len() == 7 && (1.5..=3.0).contains(&slope);
    Ok((ok, format!("slope {slope:.2}; {}", parts.join(" "))))
}

fn main() {
    // libtest flags such as --nocapture are accepted and ignored
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut cache = Cache::default();
    let mut failed = 0;
    let criteria: Vec<(usize, &str, bool)> = vec![
        (1, "exact counting", true),
        (2, "oracle agreement", true),
        (3, "parent Hamiltonian spectrum", true),
        (4, "sector bounds", true),
        (5, "MPO fidelity", true),
        (6, "DMRG counting", true),
        (7, "sampling quality", true),
        (8, "entropy area law", true),
        (9, "Boltzmann thermodynamics", true),
        (10, "dressing", true),
        (11, "amplitude amplification", true),
        (12, "scaling shape (soft)", false),
    ];
    for (id, name, gated) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let t = Instant::now();
        let out = match id {
            1 => c1_counts(),
            2 => c2_oracle(),
            3 => c3_spectrum(),
            4 => c4_sectors(),
            5 => c5_mpo(),
            6 => c6_dmrg(&mut cache),
            7 => c7_sampling(&mut cache),
            8 => c8_entropy(&mut cache),
            9 => c9_boltzmann(),
            10 => c10_dressing(),
            11 => c11_amplify(),
            _ => c12_scaling(),
        };
        let (pass, detail) = match out {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        let tag = match (pass, gated) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "SOFT-FAIL",
        };
        println!(
            "[{tag}] {id:>2} {name}: {detail} ({:.1}s)",
            t.elapsed().as_secs_f64()
        );
        if !pass && gated {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} gated criteria failed");
        std::process::exit(1);
    }
}
