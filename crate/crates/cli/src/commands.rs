use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use hamcycle::count::{
    boltzmann_brute_force, brute_force_count, enumerate_cycles, timed_count,
    transfer_matrix_count, CountMethod, TRANSFER_MAX_WIDTH,
};
use hamcycle::protocols::{
    amplify_count, boltzmann_mps, dress, dressed_csv, fit_exponent, heteropolymer_partition,
    BoltzmannOptions, ChemicalSequence, ContactModel, CountSource, EnergyModel,
};
use hamcycle::rules::EXHAUSTIVE_MAX_BULK;
use hamcycle::tn::{
    build_mpo_hhc_sparse, count_from_mps, dmrg, CountTarget, quality_csv, quality_report, DmrgOptions,
    DmrgResult, Mps,
};
use hamcycle::LatticeShape;
use serde_json::json;

use crate::config::*;
use crate::envelope::{append_csv, ResultEnvelope};

pub const COUNT_CSV_SCHEMA: &str = "hamcycle-count/1";
pub const BENCH_CSV_SCHEMA: &str = "hamcycle-bench/1";

/// Largest cycle set the exact encoder is asked to hold.
const ENCODER_MAX_CYCLES: usize = 5_000_000;

pub fn execute(cfg: &RunConfig) -> Result<ResultEnvelope> {
    let start = Instant::now();
    let module = match cfg {
        RunConfig::Count(_) => "count",
        RunConfig::Dmrg(_) | RunConfig::Report(_) | RunConfig::Bench(_) => "tn",
        RunConfig::Boltzmann(_) | RunConfig::Dress(_) | RunConfig::Amplify(_) => "protocols",
    };
    let mut env = ResultEnvelope::new(module, cfg.clone());
    match cfg {
        RunConfig::Count(a) => cmd_count(a, &mut env)?,
        RunConfig::Dmrg(a) => cmd_dmrg(a, &mut env)?,
        RunConfig::Report(a) => cmd_report(a, &mut env)?,
        RunConfig::Bench(a) => cmd_bench(a, &mut env)?,
        RunConfig::Boltzmann(a) => cmd_boltzmann(a, &mut env)?,
        RunConfig::Dress(a) => cmd_dress(a, &mut env)?,
        RunConfig::Amplify(a) => cmd_amplify(a, &mut env)?,
    }
    env.timings.insert("total_seconds".into(), start.elapsed().as_secs_f64());
    Ok(env)
}

fn method_name(m: CountMethod) -> &'static str {
    match m {
        CountMethod::Brute => "brute",
        CountMethod::Transfer => "transfer",
    }
}

fn cmd_count(a: &CountArgs, env: &mut ResultEnvelope) -> Result<()> {
    let methods = match a.method {
        MethodArg::Brute => vec![CountMethod::Brute],
        MethodArg::Transfer => vec![CountMethod::Transfer],
        MethodArg::Both => vec![CountMethod::Brute, CountMethod::Transfer],
    };
    let mut results = Vec::new();
    let mut rows = String::new();
    for m in methods {
        let (res, ms) = timed_count(a.shape, m)?;
        env.timings.insert(format!("{}_ms", method_name(m)), ms);
        rows += &format!("{},{},{},{},{ms:.3}\n", a.shape.m, a.shape.n, method_name(m), res.count);
        results.push(res);
    }
    let agree = results.windows(2).all(|w| w[0].count == w[1].count);
    if !agree {
        env.warnings.push("counting methods disagree".into());
    }
    if let Some(path) = &a.table {
        let header = format!("# schema={COUNT_CSV_SCHEMA}\nm,n,method,count,ms\n");
        append_csv(path, &header, &rows)?;
    }
    env.payload = json!({
        "shape": a.shape,
        "count": results[0].count.to_string(),
        "agree": agree,
        "results": results,
    });
    Ok(())
}

/// Doubling ramp from 16 up to `chi`.
pub fn chi_ramp(chi: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut c = 16;
    while c < chi {
        out.push(c);
        c *= 2;
    }
    out.push(chi);
    out
}

fn exact_count(shape: LatticeShape) -> Option<f64> {
    if shape.m.min(shape.n) <= TRANSFER_MAX_WIDTH {
        transfer_matrix_count(shape).ok().map(|c| c.as_f64())
    } else {
        None
    }
}

fn run_dmrg(
    shape: LatticeShape,
    schedule: Vec<usize>,
    sweeps: usize,
    tol: f64,
    seed: u64,
    count_target: Option<CountTarget>,
) -> Result<DmrgResult> {
    let mpo = build_mpo_hhc_sparse(shape)?;
    let opts = DmrgOptions {
        chi_schedule: schedule,
        max_sweeps: sweeps,
        energy_tol: tol,
        seed,
        count_target,
        ..Default::default()
    };
    Ok(dmrg(&mpo, &opts)?)
}

fn sweep_table(res: &DmrgResult) -> Vec<serde_json::Value> {
    res.trace
        .iter()
        .map(|r| {
            json!({
                "sweep": r.sweep,
                "chi": r.chi,
                "energy": r.energy,
                "max_bond": r.max_bond,
                "truncation": r.truncation,
                "solver_failures": r.solver_failures,
            })
        })
        .collect()
}

fn cmd_dmrg(a: &DmrgArgs, env: &mut ResultEnvelope) -> Result<()> {
    let schedule = a.chi_schedule.clone().unwrap_or_else(|| chi_ramp(a.chi));
    let chi = *schedule.iter().max().context("empty chi schedule")?;
    let t = Instant::now();
    let res = run_dmrg(a.shape, schedule.clone(), a.sweeps, a.energy_tol, a.seed, None)?;
    env.timings.insert("dmrg_seconds".into(), t.elapsed().as_secs_f64());
    for r in &res.trace {
        env.timings.insert(format!("sweep_{:03}_seconds", r.sweep), r.seconds);
    }
    if !res.converged {
        env.warnings.push(format!(
            "DMRG did not converge within {} sweeps (last energy {:.3e})",
            a.sweeps, res.energy
        ));
    }
    let path = a
        .checkpoint
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("hamcycle-{}-chi{chi}.mps.json", a.shape)));
    res.mps.save(&path, chi)?;

    let t = Instant::now();
    let exact = exact_count(a.shape);
    let mpo = build_mpo_hhc_sparse(a.shape)?;
    let rep = quality_report(&res.mps, Some(&mpo), a.samples, a.seed, exact)?;
    env.timings.insert("report_seconds".into(), t.elapsed().as_secs_f64());
    if let Some(p) = &a.quality_csv {
        hamcycle::io::write_atomic(p, quality_csv(&rep).as_bytes())?;
    }
    env.payload = json!({
        "shape": a.shape,
        "chi_schedule": schedule,
        "energy": res.energy,
        "converged": res.converged,
        "count_estimate": rep.count_estimate,
        "exact_count": exact,
        "rel_error": rep.rel_count_error,
        "checkpoint": path,
        "sweeps": sweep_table(&res),
        "quality": rep,
    });
    Ok(())
}

fn cmd_report(a: &ReportArgs, env: &mut ResultEnvelope) -> Result<()> {
    let mps = Mps::load(&a.checkpoint)
        .with_context(|| format!("reading checkpoint {}", a.checkpoint.display()))?;
    let exact = if a.no_exact { None } else { exact_count(mps.shape) };
    let mpo = build_mpo_hhc_sparse(mps.shape)?;
    let rep = quality_report(&mps, Some(&mpo), a.samples, a.seed, exact)?;
    if let Some(p) = &a.entropy_csv {
        hamcycle::io::write_atomic(p, quality_csv(&rep).as_bytes())?;
    }
    env.payload = serde_json::to_value(&rep)?;
    Ok(())
}

/// Least-squares slope of `log y` against `log x`.
fn loglog_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = pts.iter().map(|p| (p.0.ln(), p.1.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn cmd_bench(a: &BenchArgs, env: &mut ResultEnvelope) -> Result<()> {
    let mut chis = a.chis.clone();
    chis.sort_unstable();
    chis.dedup();
    let mut rows = Vec::new();
    let mut best = Vec::new();
    let mut reached: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    let mut csv = String::new();
    for &shape in &a.shapes {
        let Some(exact) = exact_count(shape) else {
            env.warnings.push(format!("{shape}: no exact count available, skipped"));
            continue;
        };
        let mut hit = None;
        for &chi in &chis {
            let t = Instant::now();
            let target = CountTarget {
                exact,
                rel_eps: a.target_eps,
            };
            let res = run_dmrg(shape, chi_ramp(chi), a.sweeps, 1e-9, a.seed, Some(target))?;
            let seconds = t.elapsed().as_secs_f64();
            let eps = (count_from_mps(&res.mps) - exact).abs() / exact;
            let ok = eps < a.target_eps;
            csv += &format!("{},{chi},{seconds:.3},{},{eps:.6e},{}\n", shape.n, shape.m, ok as u8);
            rows.push(json!({
                "shape": shape, "chi": chi, "seconds": seconds, "eps": eps,
                "converged": res.converged, "reached": ok,
            }));
            if ok {
                hit = Some((chi, seconds, eps));
                break;
            }
        }
        match hit {
            Some((chi, seconds, eps)) => {
                reached.entry(shape.m).or_default().push((shape.n as f64, seconds));
                best.push(json!({"shape": shape, "chi": chi, "seconds": seconds, "eps": eps}));
            }
            None => {
                env.warnings.push(format!(
                    "{shape}: no listed chi reached eps < {}",
                    a.target_eps
                ));
                best.push(json!({"shape": shape, "chi": null}));
            }
        }
    }
    if let Some(p) = &a.csv {
        let text = format!("# schema={BENCH_CSV_SCHEMA}\nn,chi,seconds,m,eps,reached\n{csv}");
        hamcycle::io::write_atomic(p, text.as_bytes())?;
    }
    let slopes: BTreeMap<String, f64> = reached
        .iter()
        .filter_map(|(m, pts)| loglog_slope(pts).map(|s| (m.to_string(), s)))
        .collect();
    env.payload = json!({
        "target_eps": a.target_eps,
        "runs": rows,
        "best": best,
        "time_vs_n_slope": slopes,
    });
    Ok(())
}

fn cmd_boltzmann(a: &BoltzmannArgs, env: &mut ResultEnvelope) -> Result<()> {
    let mps = match &a.checkpoint {
        Some(p) => {
            let mps = Mps::load(p)?;
            if mps.shape != a.shape {
                bail!("checkpoint is {}, not {}", mps.shape, a.shape);
            }
            mps
        }
        None => {
            let cycles = enumerate_cycles(a.shape, ENCODER_MAX_CYCLES)?;
            if cycles.is_empty() {
                bail!("{} has no Hamiltonian cycle", a.shape);
            }
            Mps::uniform_superposition(a.shape, &cycles, 1e-12)?
        }
    };
    let source = match a.count {
        CountSourceArg::Mps => CountSource::FromMps,
        CountSourceArg::Exact => {
            let res = if a.shape.m.min(a.shape.n) <= TRANSFER_MAX_WIDTH {
                transfer_matrix_count(a.shape)?
            } else {
                brute_force_count(a.shape)?
            };
            CountSource::Exact {
                value: res.as_f64(),
                method: res.method,
            }
        }
    };
    let model = EnergyModel::Bend { epsilon: a.epsilon };
    let opts = BoltzmannOptions {
        chi_max: a.chi_max,
        cutoff: a.cutoff,
    };
    if a.check && a.shape.num_bulk() > EXHAUSTIVE_MAX_BULK {
        env.warnings.push("shape too large for the exhaustive check".into());
    }
    let mut points = Vec::new();
    for &beta in &a.beta {
        let res = boltzmann_mps(&mps, &model, beta, source, &opts)?;
        let mut p = json!({
            "beta": beta,
            "z_estimate": res.z_estimate,
            "rho": res.rho,
            "cycle_count": res.cycle_count,
            "count_source": res.count_source,
            "truncation": res.truncation,
            "max_bond": res.mps.max_bond(),
        });
        if a.check && a.shape.num_bulk() <= EXHAUSTIVE_MAX_BULK {
            let z = boltzmann_brute_force(a.shape, &model, beta)?.partition;
            p["z_brute_force"] = json!(z);
            p["rel_error"] = json!((res.z_estimate - z).abs() / z);
        }
        points.push(p);
    }
    env.payload = json!({"shape": a.shape, "model": format!("{model:?}"), "points": points});
    Ok(())
}

fn cmd_dress(a: &DressArgs, env: &mut ResultEnvelope) -> Result<()> {
    let seq = ChemicalSequence::parse(&a.seq)?;
    let ens = dress(a.shape, &seq)?;
    if let Some(p) = &a.csv {
        hamcycle::io::write_atomic(p, dressed_csv(&ens).as_bytes())?;
    }
    let first = ens.terms[0].amplitude;
    let uniform = ens.terms.iter().all(|t| (t.amplitude - first).abs() < 1e-12);
    let mut partition = Vec::new();
    for &beta in &a.beta {
        partition.push(heteropolymer_partition(&ens, &ContactModel::hp(), beta)?);
    }
    env.payload = json!({
        "shape": a.shape,
        "sequence": seq.to_string(),
        "cycles": ens.cycles.len(),
        "term_count": ens.terms.len(),
        "distinct_terms": ens.distinct_terms,
        "uniform": uniform,
        "amplitude": first,
        "amplitude_two_orientations": ens.amplitude_two_orientations,
        "amplitude_placements_only": ens.amplitude_placements_only,
        "total_weight": ens.total_weight(),
        "layer_norms": ens.layer_norms,
        "partition": partition,
    });
    Ok(())
}

fn cmd_amplify(a: &AmplifyArgs, env: &mut ResultEnvelope) -> Result<()> {
    let runs = a
        .shape
        .iter()
        .map(|&s| amplify_count(s, a.max_iter))
        .collect::<hamcycle::Result<Vec<_>>>()?;
    let exponent = (runs.len() > 1).then(|| fit_exponent(&runs)).transpose()?;
    env.payload = json!({
        "k_opt": runs[0].k_opt,
        "exponent": exponent,
        "runs": runs,
    });
    Ok(())
}
