//! Local rewrite rules on dual configurations and the sector structure they
//! induce.
//!
//! Each rule matches a fixed pattern on a small block of plaquettes and swaps
//! one set plaquette (the source) with one empty plaquette (the target). Four
//! base rules are written out explicitly; the remaining eight are their
//! quarter-turn rotations.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{classify, DualConfig, LatticeShape};

/// Largest bulk size handled by exhaustive enumeration.
pub const EXHAUSTIVE_MAX_BULK: usize = 24;

pub(crate) fn check_exhaustive(shape: LatticeShape) -> Result<()> {
    let nb = shape.num_bulk();
    if nb > EXHAUSTIVE_MAX_BULK {
        return Err(Error::ResourceLimit {
            what: "bulk plaquettes for exhaustive enumeration",
            limit: EXHAUSTIVE_MAX_BULK,
            requested: nb,
        });
    }
    Ok(())
}

/// A rewrite rule on a `height x width` block (offsets are `(row, col)`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleDef {
    pub id: u8,
    pub height: usize,
    pub width: usize,
    /// Plaquettes whose value must match and which the rule leaves alone.
    pub fixed: Vec<((usize, usize), bool)>,
    /// Set plaquette cleared by the forward rule.
    pub source: (usize, usize),
    /// Empty plaquette filled by the forward rule.
    pub target: (usize, usize),
}

impl RuleDef {
    /// Footprint as `(width, height)`.
    pub fn footprint(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Quarter turn clockwise: `(r, c) -> (c, height - 1 - r)`.
    pub fn rotated(&self, id: u8) -> RuleDef {
        let h = self.height;
        let rot = |(r, c): (usize, usize)| (c, h - 1 - r);
        RuleDef {
            id,
            height: self.width,
            width: self.height,
            fixed: self.fixed.iter().map(|&(p, b)| (rot(p), b)).collect(),
            source: rot(self.source),
            target: rot(self.target),
        }
    }

    /// Full match pattern of the forward rule, sorted by offset.
    pub fn pattern(&self) -> Vec<((usize, usize), bool)> {
        let mut p = self.fixed.clone();
        p.push((self.source, true));
        p.push((self.target, false));
        p.sort();
        p
    }
}

fn base_rule(id: u8, height: usize, width: usize, ones: &[(usize, usize)], zeros: &[(usize, usize)], target: (usize, usize), source: (usize, usize)) -> RuleDef {
    let mut fixed: Vec<_> = ones.iter().map(|&p| (p, true)).collect();
    fixed.extend(zeros.iter().map(|&p| (p, false)));
    fixed.sort();
    RuleDef {
        id,
        height,
        width,
        fixed,
        source,
        target,
    }
}

/// The twelve rules E1..E12, indexed by `id - 1`.
pub fn generate_rule_set() -> Vec<RuleDef> {
    // Straight slide of a dead end across a 1-wide channel.
    let e1 = base_rule(
        1,
        3,
        4,
        &[(0, 1), (0, 2), (2, 1), (2, 2)],
        &[(1, 0), (1, 3)],
        (1, 1),
        (1, 2),
    );
    let e3 = base_rule(
        3,
        3,
        4,
        &[(1, 0), (1, 3)],
        &[(0, 1), (0, 2), (2, 1), (2, 2)],
        (1, 1),
        (1, 2),
    );
    // Diagonal move of a plaquette around a corner.
    let e5 = base_rule(
        5,
        4,
        4,
        &[(1, 0), (1, 2), (2, 0), (3, 1), (3, 2)],
        &[(0, 1), (2, 1), (2, 3)],
        (1, 1),
        (2, 2),
    );
    let e9 = base_rule(
        9,
        4,
        4,
        &[(0, 1), (2, 1), (2, 3)],
        &[(1, 0), (1, 2), (2, 0), (3, 1), (3, 2)],
        (1, 1),
        (2, 2),
    );
    let e2 = e1.rotated(2);
    let e4 = e3.rotated(4);
    let e6 = e5.rotated(6);
    let e7 = e6.rotated(7);
    let e8 = e7.rotated(8);
    let e10 = e9.rotated(10);
    let e11 = e10.rotated(11);
    let e12 = e11.rotated(12);
    vec![e1, e2, e3, e4, e5, e6, e7, e8, e9, e10, e11, e12]
}

fn rule_table() -> &'static [RuleDef] {
    static TABLE: OnceLock<Vec<RuleDef>> = OnceLock::new();
    TABLE.get_or_init(generate_rule_set)
}

/// Rule `k` (1-based) placed with its upper-left corner at dual `(row, col)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RuleInstance {
    pub rule: u8,
    pub row: usize,
    pub col: usize,
    pub inverse: bool,
}

/// Apply a rule instance. `Ok(None)` means the pattern does not match.
pub fn apply_rule(cfg: &DualConfig, inst: &RuleInstance) -> Result<Option<DualConfig>> {
    let rule = rule_table()
        .get((inst.rule as usize).wrapping_sub(1))
        .ok_or_else(|| Error::OutOfRange(format!("rule id {} not in 1..=12", inst.rule)))?;
    let s = cfg.shape();
    if inst.row + rule.height > s.dual_rows() || inst.col + rule.width > s.dual_cols() {
        return Err(Error::OutOfRange(format!(
            "rule E{} at ({}, {}) leaves the {}x{} dual grid",
            inst.rule,
            inst.row,
            inst.col,
            s.dual_rows(),
            s.dual_cols()
        )));
    }
    let at = |(r, c): (usize, usize)| cfg.get(inst.row + r, inst.col + c);
    if rule.fixed.iter().any(|&(p, b)| at(p) != b) {
        return Ok(None);
    }
    let (from, to) = if inst.inverse {
        (rule.target, rule.source)
    } else {
        (rule.source, rule.target)
    };
    if !at(from) || at(to) {
        return Ok(None);
    }
    let mut out = cfg.clone();
    out.set(inst.row + from.0, inst.col + from.1, false)?;
    out.set(inst.row + to.0, inst.col + to.1, true)?;
    Ok(Some(out))
}

/// A rule placement expressed on bulk positions, with frame plaquettes
/// resolved: requirements of 0 on the frame are dropped, and placements that
/// need a 1 on the frame are never produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalMove {
    pub rule: u8,
    pub row: usize,
    pub col: usize,
    pub fixed: Vec<(usize, bool)>,
    pub source: usize,
    pub target: usize,
}

/// Every placement of every rule that can ever apply on `shape`.
pub fn local_moves(shape: LatticeShape) -> Vec<LocalMove> {
    let mut out = Vec::new();
    for rule in rule_table() {
        if rule.height > shape.dual_rows() || rule.width > shape.dual_cols() {
            continue;
        }
        for row in 0..=shape.dual_rows() - rule.height {
            'placement: for col in 0..=shape.dual_cols() - rule.width {
                let pos = |(r, c): (usize, usize)| shape.bulk_position(row + r, col + c);
                let (Some(source), Some(target)) = (pos(rule.source), pos(rule.target)) else {
                    continue;
                };
                let mut fixed = Vec::new();
                for &(p, b) in &rule.fixed {
                    match pos(p) {
                        Some(k) => fixed.push((k, b)),
                        None if b => continue 'placement,
                        None => {}
                    }
                }
                out.push(LocalMove {
                    rule: rule.id,
                    row,
                    col,
                    fixed,
                    source,
                    target,
                });
            }
        }
    }
    out
}

/// Bitmask form of a [`LocalMove`] for bulks of at most 64 plaquettes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompiledMove {
    pub rule: u8,
    pub ones: u64,
    pub zeros: u64,
    pub source: u64,
    pub target: u64,
}

impl CompiledMove {
    fn context_ok(&self, x: u64) -> bool {
        x & self.ones == self.ones && x & self.zeros == 0
    }

    pub fn forward(&self, x: u64) -> Option<u64> {
        (self.context_ok(x) && x & self.source != 0 && x & self.target == 0)
            .then(|| x ^ (self.source | self.target))
    }

    pub fn backward(&self, x: u64) -> Option<u64> {
        (self.context_ok(x) && x & self.target != 0 && x & self.source == 0)
            .then(|| x ^ (self.source | self.target))
    }

    /// The partner configuration if this move applies in either direction.
    pub fn either(&self, x: u64) -> Option<u64> {
        self.forward(x).or_else(|| self.backward(x))
    }
}

pub fn compile_moves(shape: LatticeShape) -> Result<Vec<CompiledMove>> {
    if shape.num_bulk() > 64 {
        return Err(Error::ResourceLimit {
            what: "bulk plaquettes for bitmask rules",
            limit: 64,
            requested: shape.num_bulk(),
        });
    }
    Ok(local_moves(shape)
        .into_iter()
        .map(|mv| {
            let mut ones = 0u64;
            let mut zeros = 0u64;
            for (k, b) in mv.fixed {
                if b {
                    ones |= 1 << k;
                } else {
                    zeros |= 1 << k;
                }
            }
            CompiledMove {
                rule: mv.rule,
                ones,
                zeros,
                source: 1 << mv.source,
                target: 1 << mv.target,
            }
        })
        .collect())
}

/// Number of applicable (rule, placement, direction) moves from `cfg`,
/// counted with multiplicity.
pub fn rule_graph_degree(cfg: &DualConfig) -> usize {
    let shape = cfg.shape();
    let bulk = cfg.bulk_bits();
    local_moves(shape)
        .iter()
        .filter(|mv| {
            mv.fixed.iter().all(|&(k, b)| bulk[k] == b)
                && bulk[mv.source] != bulk[mv.target]
        })
        .count()
}

/// Distinct configurations reachable by one move from `cfg`.
pub fn rule_graph_neighbors(cfg: &DualConfig) -> Vec<DualConfig> {
    let mut out: Vec<DualConfig> = Vec::new();
    for rule in rule_table() {
        let s = cfg.shape();
        if rule.height > s.dual_rows() || rule.width > s.dual_cols() {
            continue;
        }
        for row in 0..=s.dual_rows() - rule.height {
            for col in 0..=s.dual_cols() - rule.width {
                for inverse in [false, true] {
                    let inst = RuleInstance {
                        rule: rule.id,
                        row,
                        col,
                        inverse,
                    };
                    if let Ok(Some(next)) = apply_rule(cfg, &inst) {
                        if !out.contains(&next) {
                            out.push(next);
                        }
                    }
                }
            }
        }
    }
    out
}

/// Classification tag of a sector.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SectorLabel {
    HamiltonianCycles,
    Multiloop { loops: usize, nesting: String },
    NonTwoFactor { violations: usize },
}

/// Connected components of the rule graph over every configuration.
#[derive(Debug, Clone)]
pub struct SectorPartition {
    pub shape: LatticeShape,
    /// Members of each class, sorted by bulk index.
    pub classes: Vec<Vec<u64>>,
    pub labels: Vec<SectorLabel>,
    /// Class id of every configuration.
    pub class_of: Vec<u32>,
    /// Largest number of distinct rule placements realising one graph edge.
    pub max_edge_multiplicity: usize,
    /// Number of unordered configuration pairs realised by more than one placement.
    pub multi_edges: usize,
}

impl SectorPartition {
    pub fn hc_class(&self) -> Option<usize> {
        self.labels
            .iter()
            .position(|l| *l == SectorLabel::HamiltonianCycles)
    }

    pub fn to_export(&self) -> SectorExport {
        SectorExport {
            shape: self.shape,
            num_classes: self.classes.len(),
            max_edge_multiplicity: self.max_edge_multiplicity,
            multi_edges: self.multi_edges,
            classes: self
                .classes
                .iter()
                .zip(&self.labels)
                .map(|(c, l)| ClassExport {
                    size: c.len(),
                    label: l.clone(),
                    representative: c[0].to_string(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassExport {
    pub size: usize,
    pub label: SectorLabel,
    pub representative: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SectorExport {
    pub shape: LatticeShape,
    pub num_classes: usize,
    pub max_edge_multiplicity: usize,
    pub multi_edges: usize,
    pub classes: Vec<ClassExport>,
}

/// Partition every configuration into rule-graph components by breadth-first
/// search, labelling each class from its smallest member.
pub fn sector_partition(shape: LatticeShape) -> Result<SectorPartition> {
    check_exhaustive(shape)?;
    let moves = compile_moves(shape)?;
    let dim = 1usize << shape.num_bulk();
    let mut class_of = vec![u32::MAX; dim];
    let mut classes = Vec::new();
    let mut labels = Vec::new();
    let mut max_mult = 1usize;
    let mut multi_edges = 0usize;
    let mut queue = VecDeque::new();
    let mut partner_count: HashMap<u64, usize> = HashMap::new();
    for start in 0..dim as u64 {
        if class_of[start as usize] != u32::MAX {
            continue;
        }
        let id = classes.len() as u32;
        class_of[start as usize] = id;
        queue.push_back(start);
        let mut members = Vec::new();
        while let Some(x) = queue.pop_front() {
            members.push(x);
            partner_count.clear();
            for mv in &moves {
                if let Some(y) = mv.either(x) {
                    *partner_count.entry(y).or_insert(0) += 1;
                    if class_of[y as usize] == u32::MAX {
                        class_of[y as usize] = id;
                        queue.push_back(y);
                    }
                }
            }
            for (&y, &c) in &partner_count {
                max_mult = max_mult.max(c);
                if c > 1 && y > x {
                    multi_edges += 1;
                }
            }
        }
        members.sort_unstable();
        let rep = classify(&DualConfig::from_index(shape, members[0])?);
        labels.push(if !rep.is_two_factor {
            SectorLabel::NonTwoFactor {
                violations: rep.c_violations,
            }
        } else if rep.num_loops == 1 {
            SectorLabel::HamiltonianCycles
        } else {
            SectorLabel::Multiloop {
                loops: rep.num_loops,
                nesting: rep.nesting,
            }
        });
        classes.push(members);
    }
    Ok(SectorPartition {
        shape,
        classes,
        labels,
        class_of,
        max_edge_multiplicity: max_mult,
        multi_edges,
    })
}

/// Class sizes grouped by label, for quick summaries.
pub fn label_histogram(p: &SectorPartition) -> BTreeMap<SectorLabel, Vec<usize>> {
    let mut out: BTreeMap<SectorLabel, Vec<usize>> = BTreeMap::new();
    for (c, l) in p.classes.iter().zip(&p.labels) {
        out.entry(l.clone()).or_default().push(c.len());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{config_from_index, count_local_loops};

    #[test]
    fn twelve_rules_with_expected_footprints() {
        let rules = generate_rule_set();
        assert_eq!(rules.len(), 12);
        assert_eq!(rules[0].footprint(), (4, 3));
        assert_eq!(rules[1].footprint(), (3, 4));
        for r in &rules[4..] {
            assert_eq!(r.footprint(), (4, 4));
        }
        assert_eq!(rules[1].pattern(), rules[0].rotated(2).pattern());
        let mut e = rules[4].clone();
        for _ in 0..4 {
            e = e.rotated(5);
        }
        assert_eq!(e, rules[4]);
        // every pattern is distinct
        for a in 0..12 {
            for b in a + 1..12 {
                assert_ne!(rules[a].pattern(), rules[b].pattern());
            }
        }
    }

    #[test]
    fn apply_and_invert() {
        let s = LatticeShape::new(4, 6).unwrap();
        let moves = compile_moves(s).unwrap();
        let mut applied = 0;
        for idx in 0..1u64 << s.num_bulk() {
            let cfg = config_from_index(s, idx).unwrap();
            for mv in local_moves(s) {
                let inst = RuleInstance {
                    rule: mv.rule,
                    row: mv.row,
                    col: mv.col,
                    inverse: false,
                };
                if let Some(next) = apply_rule(&cfg, &inst).unwrap() {
                    applied += 1;
                    assert_eq!(next.popcount(), cfg.popcount());
                    let back = apply_rule(&next, &RuleInstance { inverse: true, ..inst })
                        .unwrap()
                        .unwrap();
                    assert_eq!(back, cfg);
                }
            }
            if applied > 2000 {
                break;
            }
        }
        assert!(applied > 0);
        assert!(!moves.is_empty());
    }

    #[test]
    fn out_of_grid_placement_is_an_error() {
        let cfg = DualConfig::zeros(LatticeShape::new(4, 4).unwrap());
        let inst = RuleInstance {
            rule: 5,
            row: 2,
            col: 0,
            inverse: false,
        };
        assert!(apply_rule(&cfg, &inst).is_err());
        let bad = RuleInstance { rule: 13, ..inst };
        assert!(apply_rule(&cfg, &bad).is_err());
    }

    #[test]
    fn degrees_of_simple_configs() {
        let s = LatticeShape::new(4, 4).unwrap();
        assert_eq!(rule_graph_degree(&DualConfig::zeros(s)), 0);
        let per = config_from_index(LatticeShape::new(2, 4).unwrap(), 7).unwrap();
        assert_eq!(rule_graph_degree(&per), 0);
        assert!(rule_graph_neighbors(&per).is_empty());
    }

    #[test]
    fn degree_matches_bitmask_moves() {
        let s = LatticeShape::new(4, 4).unwrap();
        let moves = compile_moves(s).unwrap();
        for idx in 0..512u64 {
            let cfg = config_from_index(s, idx).unwrap();
            let fast = moves.iter().filter(|m| m.either(idx).is_some()).count();
            assert_eq!(rule_graph_degree(&cfg), fast);
        }
    }

    #[test]
    fn partition_4x4() {
        let s = LatticeShape::new(4, 4).unwrap();
        let p = sector_partition(s).unwrap();
        let total: usize = p.classes.iter().map(Vec::len).sum();
        assert_eq!(total, 512);
        let hc = p.hc_class().unwrap();
        assert_eq!(p.classes[hc].len(), 6);
        for (c, label) in p.classes.iter().zip(&p.labels) {
            if let SectorLabel::Multiloop { .. } = label {
                assert!(c
                    .iter()
                    .any(|&x| count_local_loops(&config_from_index(s, x).unwrap()) > 0));
            }
        }
    }

    #[test]
    fn partition_2x4_singleton_hc() {
        let s = LatticeShape::new(2, 4).unwrap();
        let p = sector_partition(s).unwrap();
        let hc = p.hc_class().unwrap();
        assert_eq!(p.classes[hc], vec![7]);
    }

    #[test]
    fn too_large_for_exhaustive() {
        let s = LatticeShape::new(6, 7).unwrap();
        assert!(matches!(
            sector_partition(s),
            Err(Error::ResourceLimit { .. })
        ));
    }
}
