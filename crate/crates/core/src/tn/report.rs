//! Sample-based quality metrics for a cycle-state MPS and their CSV form.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::lattice::{classify, LatticeShape};
use crate::tn::mpo::Mpo;
use crate::tn::mps::{count_from_mps, entropy_profile, relative_error, EntropyProfile, Mps};

pub const QUALITY_CSV_SCHEMA: &str = "hamcycle-quality/1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QualityReport {
    pub shape: LatticeShape,
    pub chi: usize,
    /// `<H>` when an operator was supplied.
    pub energy: Option<f64>,
    pub count_estimate: f64,
    pub exact_count: Option<f64>,
    pub rel_count_error: Option<f64>,
    pub samples: usize,
    pub seed: u64,
    /// Fraction of samples that are not a single Hamiltonian cycle.
    pub multiloop_prob: f64,
    /// Mean loop count over samples that are 2-factors; `None` if there
    /// were none.
    pub mean_cycles: Option<f64>,
    pub two_factor_samples: usize,
    pub entropy_profile: EntropyProfile,
    pub max_s_over_m: f64,
}

pub fn quality_report(
    mps: &Mps,
    mpo: Option<&Mpo>,
    samples: usize,
    seed: u64,
    exact_count: Option<f64>,
) -> Result<QualityReport> {
    let energy = mpo.map(|h| mps.energy(h)).transpose()?;
    let count_estimate = count_from_mps(mps);
    let draws = mps.sample(samples, seed)?;
    let mut multi = 0usize;
    let mut loops = 0usize;
    let mut two_factors = 0usize;
    for cfg in &draws {
        let rep = classify(cfg);
        if !rep.is_hamiltonian_cycle() {
            multi += 1;
        }
        if rep.is_two_factor {
            two_factors += 1;
            loops += rep.num_loops;
        }
    }
    let profile = entropy_profile(mps);
    Ok(QualityReport {
        shape: mps.shape,
        chi: mps.max_bond(),
        energy,
        count_estimate,
        exact_count,
        rel_count_error: exact_count.map(|c| relative_error(count_estimate, c)),
        samples,
        seed,
        multiloop_prob: if samples == 0 { 0.0 } else { multi as f64 / samples as f64 },
        mean_cycles: (two_factors > 0).then(|| loops as f64 / two_factors as f64),
        two_factor_samples: two_factors,
        max_s_over_m: profile.max_s_over_m,
        entropy_profile: profile,
    })
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| format!("{v:.12e}"))
}

pub fn quality_csv_header() -> String {
    format!(
        "# schema={QUALITY_CSV_SCHEMA}\nn,chi,energy,count_est,eps,multiloop_prob,mean_cycles,bond_index,S,S_over_m\n"
    )
}

/// One row per snake bond; the scalar columns repeat on every row.
pub fn quality_csv_rows(rep: &QualityReport) -> String {
    let mut out = String::new();
    let p = &rep.entropy_profile;
    for (v, (s, so)) in p.entropy.iter().zip(&p.s_over_m).enumerate() {
        writeln!(
            out,
            "{},{},{},{:.12e},{},{:.6},{},{},{:.12e},{:.12e}",
            rep.shape.n,
            rep.chi,
            opt(rep.energy),
            rep.count_estimate,
            opt(rep.rel_count_error),
            rep.multiloop_prob,
            opt(rep.mean_cycles),
            v + 1,
            s,
            so
        )
        .unwrap();
    }
    out
}

pub fn quality_csv(rep: &QualityReport) -> String {
    quality_csv_header() + &quality_csv_rows(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::count::enumerate_cycles;
    use crate::lattice::DualConfig;

    #[test]
    fn exact_state_is_clean() {
        let shape = LatticeShape::new(4, 4).unwrap();
        let cycles = enumerate_cycles(shape, 10).unwrap();
        let mps = Mps::uniform_superposition(shape, &cycles, 1e-12).unwrap();
        let rep = quality_report(&mps, None, 1000, 7, Some(6.0)).unwrap();
        assert_eq!(rep.multiloop_prob, 0.0);
        assert_eq!(rep.mean_cycles, Some(1.0));
        assert!(rep.rel_count_error.unwrap() < 1e-10);
        let csv = quality_csv(&rep);
        assert_eq!(csv.lines().count(), 2 + mps.len() - 1);
    }

    #[test]
    fn empty_product_state_is_all_multiloop() {
        let shape = LatticeShape::new(4, 4).unwrap();
        let mps = Mps::product(&DualConfig::zeros(shape));
        let rep = quality_report(&mps, None, 50, 1, None).unwrap();
        assert_eq!(rep.multiloop_prob, 1.0);
        assert_eq!(rep.mean_cycles, None);
        assert!((rep.count_estimate - 1.0).abs() < 1e-12);
    }
}
