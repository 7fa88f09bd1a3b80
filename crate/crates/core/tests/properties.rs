use std::collections::{BTreeSet, HashMap};

use hamcycle::count::{
    boltzmann_brute_force, brute_force_count, brute_force_cycles, transfer_matrix_count,
};
use hamcycle::exact::assemble_parts;
use hamcycle::lattice::{bends_by_walk, extract_edges, SnakeMap, Vertex};
use hamcycle::protocols::{
    amplify_count, boltzmann_mps, dress, BoltzmannOptions, ChemicalSequence, CountSource,
    EnergyModel,
};
use hamcycle::rules::rule_graph_neighbors;
use hamcycle::tn::Mps;
use hamcycle::{classify, DualConfig, LatticeShape};
use proptest::prelude::*;
use proptest::sample::subsequence;

fn shape(m: usize, n: usize) -> LatticeShape {
    LatticeShape::new(m, n).unwrap()
}

fn small_shape() -> impl Strategy<Value = LatticeShape> {
    (2usize..=5, 2usize..=5).prop_map(|(m, n)| shape(m, n))
}

/// A shape with at most 12 bulk plaquettes and a random configuration on it.
fn shape_and_config() -> impl Strategy<Value = DualConfig> {
    small_shape()
        .prop_filter("small bulk", |s| s.num_bulk() <= 12)
        .prop_flat_map(|s| {
            (0u64..1 << s.num_bulk()).prop_map(move |x| DualConfig::from_index(s, x).unwrap())
        })
}

fn cycles_of(s: LatticeShape) -> Vec<DualConfig> {
    brute_force_cycles(s)
        .unwrap()
        .into_iter()
        .map(|x| DualConfig::from_index(s, x).unwrap())
        .collect()
}

fn walk(cfg: &DualConfig) -> Vec<Vertex> {
    let mut adj: HashMap<Vertex, Vec<Vertex>> = HashMap::new();
    for e in extract_edges(cfg) {
        adj.entry(e.a).or_default().push(e.b);
        adj.entry(e.b).or_default().push(e.a);
    }
    let mut out = vec![(0, 0)];
    let (mut prev, mut cur) = ((0, 0), adj[&(0, 0)][0]);
    while cur != (0, 0) {
        out.push(cur);
        let nb = &adj[&cur];
        let next = if nb[0] == prev { nb[1] } else { nb[0] };
        prev = cur;
        cur = next;
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn index_round_trip(cfg in shape_and_config()) {
        let idx = cfg.index().unwrap();
        prop_assert_eq!(DualConfig::from_index(cfg.shape(), idx).unwrap(), cfg.clone());
        let text = cfg.to_text_grid();
        prop_assert_eq!(DualConfig::from_text_grid(&text).unwrap(), cfg);
    }

    #[test]
    fn snake_is_a_bijection(s in small_shape()) {
        let snake = SnakeMap::new(s);
        let seen: BTreeSet<usize> = (0..snake.len()).map(|t| snake.chain_to_bulk(t)).collect();
        prop_assert_eq!(seen.len(), s.num_bulk());
        for t in 0..snake.len() {
            prop_assert_eq!(snake.bulk_to_chain(snake.chain_to_bulk(t)), t);
            let (i, j) = snake.plaquette(t);
            prop_assert_eq!(snake.position(i, j).unwrap(), t);
        }
        if snake.len() > 1 {
            // consecutive chain sites are grid neighbours
            for t in 1..snake.len() {
                let (a, b) = (snake.plaquette(t - 1), snake.plaquette(t));
                prop_assert_eq!(a.0.abs_diff(b.0) + a.1.abs_diff(b.1), 1);
            }
        }
    }

    #[test]
    fn rules_conserve_popcount_and_cycles(cfg in shape_and_config()) {
        let is_cycle = classify(&cfg).is_hamiltonian_cycle();
        for next in rule_graph_neighbors(&cfg) {
            prop_assert_eq!(next.popcount(), cfg.popcount());
            prop_assert_eq!(classify(&next).is_hamiltonian_cycle(), is_cycle);
        }
    }

    #[test]
    fn counting_methods_agree(s in small_shape()) {
        let a = brute_force_count(s).unwrap().count;
        let b = transfer_matrix_count(s).unwrap().count;
        prop_assert_eq!(&a, &b);
        if s.m % 2 == 1 && s.n % 2 == 1 {
            prop_assert_eq!(a, 0u32.into());
        }
    }

    #[test]
    fn bend_energy_counts_corners(s in small_shape()) {
        let model = EnergyModel::Bend { epsilon: 1.0 };
        for c in cycles_of(s) {
            prop_assert_eq!(model.energy(&c), bends_by_walk(&c).unwrap() as f64);
        }
    }

    #[test]
    fn sequence_rejects_reserved_symbols(text in "[HPtε ,]{1,8}") {
        // surrounding whitespace is trimmed
        let reserved = text.trim().chars().any(|c| matches!(c, 't' | 'ε' | ' ' | ','));
        let reserved = reserved || text.trim().is_empty();
        prop_assert_eq!(ChemicalSequence::parse(&text).is_err(), reserved);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn parent_hamiltonian_structure(
        s in small_shape().prop_filter("dense size", |s| s.num_bulk() <= 9 && s.m * s.n > 4),
    ) {
        let parts = assemble_parts(s).unwrap();
        prop_assert_eq!(parts.total.max_asymmetry(), 0.0);
        for op in [&parts.constraints, &parts.local_loops] {
            prop_assert!(op.triplets().all(|(r, c, _)| r == c));
        }
        // off-diagonal entries count parallel moves, rows sum to zero
        let mut row_sum = vec![0.0; parts.laplacian.dim()];
        for (r, c, v) in parts.laplacian.triplets() {
            row_sum[r] += v;
            if r == c {
                prop_assert!(v >= 0.0);
            } else {
                prop_assert!(v <= -1.0 && v.fract() == 0.0);
            }
        }
        prop_assert!(row_sum.iter().all(|&x| x == 0.0));
        let (vals, _) = hamcycle::linalg::eigh(&parts.total.to_dense());
        prop_assert!(vals[0] > -1e-10);
    }

    #[test]
    fn mps_round_trip_and_truncation(
        picks in subsequence((0..37usize).collect::<Vec<_>>(), 1..=37),
        chi in 1usize..6,
    ) {
        let s = shape(6, 4);
        let all = cycles_of(s);
        let chosen: Vec<DualConfig> = picks.iter().map(|&k| all[k].clone()).collect();
        let mut mps = Mps::uniform_superposition(s, &chosen, 1e-12).unwrap();
        let dense = mps.to_dense().unwrap();
        let amp = 1.0 / (chosen.len() as f64).sqrt();
        let members: BTreeSet<u64> = chosen.iter().map(|c| c.index().unwrap()).collect();
        for (x, v) in dense.iter().enumerate() {
            let want = if members.contains(&(x as u64)) { amp } else { 0.0 };
            prop_assert!((v.abs() - want).abs() < 1e-10);
        }
        mps.compress(chi, 0.0);
        prop_assert!(mps.max_bond() <= chi);
        prop_assert!(mps.isometry_residual() < 1e-12);
    }

    #[test]
    fn boltzmann_matches_enumeration(
        beta in 0.0f64..3.0,
        table in prop::array::uniform16(-1.0f64..1.0),
        which in 0usize..3,
    ) {
        let s = [shape(4, 4), shape(2, 6), shape(4, 5)][which];
        let cycles = cycles_of(s);
        let mps = Mps::uniform_superposition(s, &cycles, 1e-12).unwrap();
        let model = EnergyModel::Window { table };
        let r = boltzmann_mps(&mps, &model, beta, CountSource::FromMps, &BoltzmannOptions::default())
            .unwrap();
        let z = boltzmann_brute_force(s, &model, beta).unwrap().partition;
        prop_assert!((r.z_estimate - z).abs() < 1e-8 * z);
    }

    #[test]
    fn dressing_is_normalized_and_contiguous(
        bits in prop::collection::vec(any::<bool>(), 16),
        square in any::<bool>(),
    ) {
        let s = if square { shape(4, 4) } else { shape(2, 4) };
        let text: String = bits[..s.num_vertices()]
            .iter()
            .map(|&b| if b { 'H' } else { 'P' })
            .collect();
        let seq: Vec<char> = text.chars().collect();
        let ens = dress(s, &ChemicalSequence::parse(&text).unwrap()).unwrap();
        prop_assert!((ens.total_weight() - 1.0).abs() < 1e-10);
        for t in &ens.terms {
            let idx: u64 = ens.cycles[t.cycle].parse().unwrap();
            let w = walk(&DualConfig::from_index(s, idx).unwrap());
            let sym: Vec<char> = t.symbols.chars().collect();
            let k0 = w.iter().position(|&v| v == t.start).unwrap();
            let len = w.len();
            let fits = [1isize, -1].iter().any(|&d| {
                (0..len).all(|l| {
                    let (i, j) = w[(k0 as isize + d * l as isize).rem_euclid(len as isize) as usize];
                    sym[i * s.n + j] == seq[l]
                })
            });
            prop_assert!(fits, "{} on cycle {}", t.symbols, t.cycle);
        }
    }

    #[test]
    fn amplification_follows_closed_form(which in 0usize..5) {
        let s = [shape(2, 4), shape(2, 6), shape(4, 4), shape(4, 5), shape(2, 8)][which];
        let run = amplify_count(s, 20).unwrap();
        let theta = run.r.sqrt().asin();
        for st in &run.trace {
            prop_assert!((0.0..=1.0).contains(&st.p));
            let want = ((2 * st.k + 1) as f64 * theta).sin().powi(2);
            prop_assert!((st.p - want).abs() < 1e-8);
        }
    }
}
