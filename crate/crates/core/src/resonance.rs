//! Exact resonance machinery: integer commensurability checks for cycles,
//! pumpkins and leaf stars, construction of exactly localized eigenvectors,
//! length tuning toward a target frequency, joining of resonant components
//! and rank certificates for shapes that can never carry a localized mode.
//!
//! A localized eigenvector vanishes identically outside a finite arc set;
//! on the active arcs the field must be zero at every vertex and the
//! outgoing derivatives must balance there without help from the rest of
//! the graph. Those conditions quantize the arc lengths:
//!
//! * cycle of p >= 3 arcs:  l_j / n_j all equal, sum of n_j even;
//! * pumpkin (parallel arcs): l_j / n_j all equal, all n_j of one parity;
//! * connected leaves:      k l_j an odd multiple of pi/2 on every leaf.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ArcId, MetricGraph, VertexId};
use crate::spectral::{
    assemble_secular, orthonormalize, ArcAmplitudes, Eigenpair, ModeCoefficients,
};

const PI: f64 = std::f64::consts::PI;

/// Shape on which a localized eigenvector lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Cycle,
    Pumpkin,
    Leaves,
}

/// A verified resonance: the shape, its arcs in the host graph, the integer
/// tuple and the resonant frequency k = n_1 pi / l_1 (for leaves
/// k = o_1 pi / (2 l_1)).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceSpec {
    pub kind: ShapeKind,
    #[serde(rename = "arcs")]
    pub arc_ids: Vec<ArcId>,
    #[serde(rename = "n")]
    pub integers: Vec<u64>,
    pub k: f64,
}

impl ResonanceSpec {
    pub fn with_arc_ids(mut self, ids: &[ArcId]) -> Self {
        self.arc_ids = ids.to_vec();
        self
    }

    /// Dimension of the eigenspace the shape supports: 1 for a cycle,
    /// p - 1 for a p-pumpkin or p connected leaves.
    pub fn expected_multiplicity(&self) -> usize {
        match self.kind {
            ShapeKind::Cycle => 1,
            ShapeKind::Pumpkin | ShapeKind::Leaves => self.integers.len().saturating_sub(1),
        }
    }

    /// Human-readable statement of the resonance condition that produced
    /// this spec.
    pub fn condition_statement(&self) -> String {
        match self.kind {
            ShapeKind::Cycle => format!(
                "cycle resonance: l_j/n_j equal with n = {:?} and even sum; k = n_1*pi/l_1 = {}",
                self.integers, self.k
            ),
            ShapeKind::Pumpkin => format!(
                "pumpkin resonance: l_j/n_j equal with same-parity n = {:?}; k = n_1*pi/l_1 = {}; eigenspace dimension {}",
                self.integers,
                self.k,
                self.expected_multiplicity()
            ),
            ShapeKind::Leaves => format!(
                "leaf resonance: k*l_j odd multiples of pi/2 with odd o = {:?}; k = o_1*pi/(2*l_1) = {}; eigenspace dimension {}",
                self.integers,
                self.k,
                self.expected_multiplicity()
            ),
        }
    }
}

/// Smallest integer tuple (by leading entry) with l_j / n_j equal within
/// `rel_tol` and n_j <= n_max, accepted by `admit`.
fn search_tuple<F>(lengths: &[f64], n_max: u64, rel_tol: f64, admit: F) -> Option<Vec<u64>>
where
    F: Fn(&[u64]) -> bool,
{
    for n1 in 1..=n_max {
        let base = lengths[0] / n1 as f64;
        let mut tuple = Vec::with_capacity(lengths.len());
        let mut ok = true;
        for &l in lengths {
            let n = (l / base).round();
            if n < 1.0 || n > n_max as f64 || ((l / n) - base).abs() > rel_tol * base {
                ok = false;
                break;
            }
            tuple.push(n as u64);
        }
        if ok && admit(&tuple) {
            return Some(tuple);
        }
    }
    None
}

/// Polygon resonance: returns the spec with the smallest n_1 such that the
/// lengths are commensurable and the integer sum is even. Tuples whose sum
/// is odd are retried in doubled form automatically (the doubled tuple shows
/// up at a larger n_1). Absence is a valid answer.
pub fn check_cycle(lengths: &[f64], n_max: u64, rel_tol: f64) -> Option<ResonanceSpec> {
    if lengths.len() == 2 {
        // Degenerate polygon: a 2-cycle is a pumpkin.
        return check_pumpkin(lengths, n_max, rel_tol);
    }
    if lengths.len() < 3 {
        return None;
    }
    let tuple = search_tuple(lengths, n_max, rel_tol, |t| {
        t.iter().sum::<u64>() % 2 == 0
    })?;
    let k = tuple[0] as f64 * PI / lengths[0];
    Some(ResonanceSpec { kind: ShapeKind::Cycle, arc_ids: Vec::new(), integers: tuple, k })
}

/// Pumpkin resonance: commensurable lengths with all integers of the same
/// parity. The eigenspace has dimension p - 1 (amplitudes summing to zero).
pub fn check_pumpkin(lengths: &[f64], n_max: u64, rel_tol: f64) -> Option<ResonanceSpec> {
    if lengths.len() < 2 {
        return None;
    }
    let tuple = search_tuple(lengths, n_max, rel_tol, |t| {
        t.iter().all(|n| n % 2 == t[0] % 2)
    })?;
    let k = tuple[0] as f64 * PI / lengths[0];
    Some(ResonanceSpec { kind: ShapeKind::Pumpkin, arc_ids: Vec::new(), integers: tuple, k })
}

/// Connected-leaves resonance: k l_j = o_j pi / 2 with every o_j odd.
pub fn check_leaves(lengths: &[f64], n_max: u64, rel_tol: f64) -> Option<ResonanceSpec> {
    if lengths.len() < 2 {
        return None;
    }
    let mut o1 = 1;
    while o1 <= n_max {
        let base = lengths[0] / o1 as f64;
        let mut tuple = Vec::with_capacity(lengths.len());
        let mut ok = true;
        for &l in lengths {
            let o = (l / base).round();
            if o < 1.0 || o > n_max as f64 || o as u64 % 2 == 0 || ((l / o) - base).abs() > rel_tol * base {
                ok = false;
                break;
            }
            tuple.push(o as u64);
        }
        if ok {
            let k = o1 as f64 * PI / (2.0 * lengths[0]);
            return Some(ResonanceSpec {
                kind: ShapeKind::Leaves,
                arc_ids: Vec::new(),
                integers: tuple,
                k,
            });
        }
        o1 += 2;
    }
    None
}

/// Dispatch by shape kind; used by length tuning and the command line.
pub fn check_shape(
    kind: ShapeKind,
    lengths: &[f64],
    n_max: u64,
    rel_tol: f64,
) -> Option<ResonanceSpec> {
    match kind {
        ShapeKind::Cycle => check_cycle(lengths, n_max, rel_tol),
        ShapeKind::Pumpkin => check_pumpkin(lengths, n_max, rel_tol),
        ShapeKind::Leaves => check_leaves(lengths, n_max, rel_tol),
    }
}

// ── Shape detection ─────────────────────────────────────────────────────

/// Traversal of a closed cycle: arc indices with their direction relative
/// to the stored orientation.
struct CycleTraversal {
    steps: Vec<(usize, bool)>,
}

fn arc_indices(graph: &MetricGraph, arc_ids: &[ArcId]) -> Result<Vec<usize>> {
    let mut seen = BTreeSet::new();
    arc_ids
        .iter()
        .map(|&id| {
            if !seen.insert(id) {
                return Err(Error::ShapeMismatch(format!("arc {id} listed twice")));
            }
            graph
                .arc_index(id)
                .ok_or_else(|| Error::ShapeMismatch(format!("arc {id} not in graph")))
        })
        .collect()
}

fn detect_cycle(graph: &MetricGraph, arcs: &[usize]) -> Result<CycleTraversal> {
    let mut ends: BTreeMap<VertexId, Vec<(usize, bool)>> = BTreeMap::new();
    for &ai in arcs {
        let arc = &graph.arcs[ai];
        if arc.from == arc.to {
            return Err(Error::ShapeMismatch(format!("arc {} is a self-loop", arc.id)));
        }
        ends.entry(arc.from).or_default().push((ai, true));
        ends.entry(arc.to).or_default().push((ai, false));
    }
    if ends.values().any(|v| v.len() != 2) || ends.len() != arcs.len() {
        return Err(Error::ShapeMismatch(
            "arcs do not form a simple closed cycle".to_string(),
        ));
    }
    let start_arc = *arcs
        .iter()
        .min_by_key(|&&ai| graph.arcs[ai].id)
        .expect("cycle has arcs");
    let start_vertex = graph.arcs[start_arc].from;
    let mut steps = vec![(start_arc, true)];
    let mut used: BTreeSet<usize> = [start_arc].into();
    let mut at = graph.arcs[start_arc].to;
    while steps.len() < arcs.len() {
        let next = ends[&at]
            .iter()
            .copied()
            .find(|(ai, _)| !used.contains(ai))
            .ok_or_else(|| Error::ShapeMismatch("cycle walk got stuck".to_string()))?;
        used.insert(next.0);
        let arc = &graph.arcs[next.0];
        // Forward means we enter at the arc's origin.
        let forward = next.1;
        at = if forward { arc.to } else { arc.from };
        steps.push((next.0, forward));
    }
    if at != start_vertex {
        return Err(Error::ShapeMismatch("arc walk does not close".to_string()));
    }
    Ok(CycleTraversal { steps })
}

/// Shared endpoints (u, v) of a parallel bundle, with u taken from the
/// lowest-id arc's origin.
fn detect_pumpkin(graph: &MetricGraph, arcs: &[usize]) -> Result<(VertexId, VertexId)> {
    let first = arcs
        .iter()
        .min_by_key(|&&ai| graph.arcs[ai].id)
        .copied()
        .ok_or_else(|| Error::ShapeMismatch("empty arc list".to_string()))?;
    let (u, v) = (graph.arcs[first].from, graph.arcs[first].to);
    if u == v {
        return Err(Error::ShapeMismatch("pumpkin arcs cannot be self-loops".to_string()));
    }
    for &ai in arcs {
        let arc = &graph.arcs[ai];
        let same = (arc.from == u && arc.to == v) || (arc.from == v && arc.to == u);
        if !same {
            return Err(Error::ShapeMismatch(format!(
                "arc {} does not run between vertices {u} and {v}",
                arc.id
            )));
        }
    }
    Ok((u, v))
}

/// Common center of a leaf star; every other endpoint must be a leaf of the
/// host graph.
fn detect_leaves(graph: &MetricGraph, arcs: &[usize]) -> Result<VertexId> {
    let degrees = graph.degrees();
    let degree_of = |id: VertexId| -> usize {
        graph.vertex_index(id).map(|i| degrees[i]).unwrap_or(0)
    };
    let first = &graph.arcs[arcs[0]];
    'candidate: for center in [first.from, first.to] {
        let mut far = BTreeSet::new();
        for &ai in arcs {
            let arc = &graph.arcs[ai];
            let other = if arc.from == center {
                arc.to
            } else if arc.to == center {
                arc.from
            } else {
                continue 'candidate;
            };
            if other == center || degree_of(other) != 1 || !far.insert(other) {
                continue 'candidate;
            }
        }
        return Ok(center);
    }
    Err(Error::ShapeMismatch(
        "arcs do not form a star of leaves around one vertex".to_string(),
    ))
}

// ── Mode construction ───────────────────────────────────────────────────

fn integer_for(k: f64, l: f64, odd: bool) -> Result<u64> {
    let x = if odd { 2.0 * k * l / PI } else { k * l / PI };
    let n = if odd {
        let m = ((x - 1.0) / 2.0).round().max(0.0);
        2.0 * m + 1.0
    } else {
        x.round().max(1.0)
    };
    if (x - n).abs() > 1e-6 * x.max(1.0) {
        return Err(Error::ShapeMismatch(format!(
            "arc length {l} is not resonant at k = {k}: k*l/pi = {} is not near an admissible integer",
            k * l / PI
        )));
    }
    Ok(n as u64)
}

/// Basis of the hyperplane sum(a) = 0 in R^p: vectors e_1 - e_{i+1}.
fn zero_sum_basis(p: usize) -> Vec<Vec<f64>> {
    (1..p)
        .map(|i| {
            let mut v = vec![0.0; p];
            v[0] = 1.0;
            v[i] = -1.0;
            v
        })
        .collect()
}

/// Builds the exactly localized eigenvector(s) for a verified spec. Active
/// arcs carry pure sine profiles in the shape's own frame (cosine in stored
/// coordinates when an arc is oriented against the frame); inactive arcs are
/// zero. Fails if the arcs do not form the claimed shape or the residual
/// check ||M(k) X|| / ||X|| < 1e-10 does not hold.
pub fn construct_mode(graph: &MetricGraph, spec: &ResonanceSpec) -> Result<Eigenpair> {
    let arcs = arc_indices(graph, &spec.arc_ids)?;
    if arcs.is_empty() {
        return Err(Error::ShapeMismatch("spec lists no arcs".to_string()));
    }
    let k = spec.k;
    let m = graph.arc_count();

    let mut raw_modes: Vec<ModeCoefficients> = Vec::new();
    match spec.kind {
        ShapeKind::Cycle => {
            let traversal = detect_cycle(graph, &arcs)?;
            let ns: Vec<u64> = traversal
                .steps
                .iter()
                .map(|&(ai, _)| integer_for(k, graph.arcs[ai].length, false))
                .collect::<Result<_>>()?;
            if ns.iter().sum::<u64>() % 2 != 0 {
                return Err(Error::ShapeMismatch(
                    "integer sum around the cycle is odd; no closed sign pattern".to_string(),
                ));
            }
            let mut mode = ModeCoefficients::zero(k, m);
            let mut c = 1.0;
            for (&(ai, forward), &n) in traversal.steps.iter().zip(&ns) {
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                let a = if forward { c } else { -c * sign };
                mode.amps[ai] = ArcAmplitudes { a, b: 0.0 };
                c *= sign;
            }
            raw_modes.push(mode);
        }
        ShapeKind::Pumpkin => {
            let (u, _v) = detect_pumpkin(graph, &arcs)?;
            let ns: Vec<u64> = arcs
                .iter()
                .map(|&ai| integer_for(k, graph.arcs[ai].length, false))
                .collect::<Result<_>>()?;
            if ns.iter().any(|n| n % 2 != ns[0] % 2) {
                return Err(Error::ShapeMismatch(
                    "pumpkin integers are of mixed parity".to_string(),
                ));
            }
            for basis in zero_sum_basis(arcs.len()) {
                let mut mode = ModeCoefficients::zero(k, m);
                for ((&ai, &n), &a) in arcs.iter().zip(&ns).zip(&basis) {
                    let forward = graph.arcs[ai].from == u;
                    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                    let amp = if forward { a } else { -a * sign };
                    mode.amps[ai] = ArcAmplitudes { a: amp, b: 0.0 };
                }
                raw_modes.push(mode);
            }
        }
        ShapeKind::Leaves => {
            let center = detect_leaves(graph, &arcs)?;
            let os: Vec<u64> = arcs
                .iter()
                .map(|&ai| integer_for(k, graph.arcs[ai].length, true))
                .collect::<Result<_>>()?;
            for basis in zero_sum_basis(arcs.len()) {
                let mut mode = ModeCoefficients::zero(k, m);
                for ((&ai, &o), &a) in arcs.iter().zip(&os).zip(&basis) {
                    let outward = graph.arcs[ai].from == center;
                    if outward {
                        mode.amps[ai] = ArcAmplitudes { a, b: 0.0 };
                    } else {
                        // Stored coordinate starts at the leaf: the profile
                        // becomes +-a cos(kx) there.
                        let sign = if (o - 1) / 2 % 2 == 0 { 1.0 } else { -1.0 };
                        mode.amps[ai] = ArcAmplitudes { a: 0.0, b: a * sign };
                    }
                }
                raw_modes.push(mode);
            }
        }
    }

    let matrix = assemble_secular(graph, k)?;
    let mut worst = 0.0_f64;
    for mode in &raw_modes {
        let r = matrix.residual(mode);
        worst = worst.max(r);
        if r >= 1e-10 {
            return Err(Error::NotResonant { k, sigma_min: r, threshold: 1e-10 });
        }
    }
    let modes = orthonormalize(raw_modes, graph)?;
    let multiplicity = modes.len();
    Ok(Eigenpair { k, modes, multiplicity, residual: worst })
}

// ── Length tuning ───────────────────────────────────────────────────────

fn round_odd(x: f64) -> u64 {
    let m = ((x - 1.0) / 2.0).round().max(0.0);
    (2.0 * m + 1.0) as u64
}

fn round_even(x: f64) -> u64 {
    let m = (x / 2.0).round().max(1.0);
    (2.0 * m) as u64
}

/// Retunes the listed arcs so that the shape resonates exactly at
/// `k_target`: each length becomes n_j pi / k_target (o_j pi / (2 k_target)
/// for leaves) with integers nearest to the current lengths, repaired to
/// satisfy the shape's parity condition with the smallest length misfit.
pub fn tune_lengths(
    graph: &MetricGraph,
    arc_ids: &[ArcId],
    kind: ShapeKind,
    k_target: f64,
) -> Result<(MetricGraph, ResonanceSpec)> {
    if !(k_target > 0.0) {
        return Err(Error::InvalidK(k_target));
    }
    let arcs = arc_indices(graph, arc_ids)?;
    match kind {
        ShapeKind::Cycle => {
            detect_cycle(graph, &arcs)?;
        }
        ShapeKind::Pumpkin => {
            detect_pumpkin(graph, &arcs)?;
        }
        ShapeKind::Leaves => {
            detect_leaves(graph, &arcs)?;
        }
    }

    let targets: Vec<f64> = arcs
        .iter()
        .map(|&ai| k_target * graph.arcs[ai].length / PI)
        .collect();

    let integers: Vec<u64> = match kind {
        ShapeKind::Cycle => {
            let mut ns: Vec<u64> = targets.iter().map(|&x| x.round().max(1.0) as u64).collect();
            if ns.iter().sum::<u64>() % 2 != 0 {
                // Parity repair: adjust the integer whose new length moves
                // the arc the least.
                let mut best: Option<(f64, usize, i64)> = None;
                for (j, &x) in targets.iter().enumerate() {
                    for delta in [1i64, -1] {
                        let candidate = ns[j] as i64 + delta;
                        if candidate < 1 {
                            continue;
                        }
                        let misfit = (candidate as f64 - x).abs();
                        if best.map_or(true, |(b, _, _)| misfit < b) {
                            best = Some((misfit, j, delta));
                        }
                    }
                }
                let (_, j, delta) = best.expect("repair candidate exists");
                ns[j] = (ns[j] as i64 + delta) as u64;
            }
            ns
        }
        ShapeKind::Pumpkin => {
            let odd: Vec<u64> = targets.iter().map(|&x| round_odd(x)).collect();
            let even: Vec<u64> = targets.iter().map(|&x| round_even(x)).collect();
            let score = |ns: &[u64]| -> f64 {
                ns.iter()
                    .zip(&targets)
                    .map(|(&n, &x)| (n as f64 - x).abs())
                    .sum()
            };
            if score(&odd) <= score(&even) {
                odd
            } else {
                even
            }
        }
        ShapeKind::Leaves => targets.iter().map(|&x| round_odd(2.0 * x)).collect(),
    };

    let mut tuned = graph.clone();
    for (&ai, &n) in arcs.iter().zip(&integers) {
        tuned.arcs[ai].length = match kind {
            ShapeKind::Leaves => n as f64 * PI / (2.0 * k_target),
            _ => n as f64 * PI / k_target,
        };
    }
    let spec = ResonanceSpec {
        kind,
        arc_ids: arc_ids.to_vec(),
        integers,
        k: k_target,
    };
    Ok((tuned, spec))
}

// ── Composite joining ───────────────────────────────────────────────────

fn spec_vertices(graph: &MetricGraph, spec: &ResonanceSpec) -> Result<BTreeSet<VertexId>> {
    let arcs = arc_indices(graph, &spec.arc_ids)?;
    Ok(arcs
        .iter()
        .flat_map(|&ai| [graph.arcs[ai].from, graph.arcs[ai].to])
        .collect())
}

/// Unit-peak union eigenvector built from each component's sign pattern.
fn component_pattern(graph: &MetricGraph, spec: &ResonanceSpec) -> Result<ModeCoefficients> {
    let pair = construct_mode(graph, spec)?;
    let mut mode = pair.modes.into_iter().next().expect("at least one mode");
    let peak = mode
        .amps
        .iter()
        .map(|p| p.a.abs().max(p.b.abs()))
        .fold(0.0, f64::max);
    mode.scale(1.0 / peak);
    Ok(mode)
}

/// Joins two localized eigenvectors of the same frequency by identifying
/// one vertex of each active subgraph. Returns the glued graph and the
/// union mode (normalized), after verifying the secular residual and the
/// no-external-flux caveat at every active vertex.
pub fn join_composite(
    spec_a: &ResonanceSpec,
    spec_b: &ResonanceSpec,
    graph: &MetricGraph,
    glue: (VertexId, VertexId),
) -> Result<(MetricGraph, Eigenpair)> {
    let k = spec_a.k;
    if (spec_a.k - spec_b.k).abs() > 1e-12 * spec_a.k.abs().max(1.0) {
        return Err(Error::KMismatch(spec_a.k, spec_b.k));
    }
    let va = spec_vertices(graph, spec_a)?;
    let vb = spec_vertices(graph, spec_b)?;
    if !va.contains(&glue.0) || !vb.contains(&glue.1) {
        return Err(Error::InvalidArgs(format!(
            "glue vertices ({}, {}) must lie on the respective active subgraphs",
            glue.0, glue.1
        )));
    }
    let overlap: Vec<ArcId> = spec_a
        .arc_ids
        .iter()
        .filter(|id| spec_b.arc_ids.contains(id))
        .copied()
        .collect();
    if !overlap.is_empty() {
        return Err(Error::InvalidArgs(format!(
            "components share arcs {overlap:?}; active sets must be disjoint"
        )));
    }

    // Equal-amplitude union on the original graph, then re-indexed onto the
    // glued one (arc order is preserved by vertex identification).
    let mode_a = component_pattern(graph, spec_a)?;
    let mode_b = component_pattern(graph, spec_b)?;
    let glued = graph.glue_vertices(glue.0, glue.1)?;
    let mut union = ModeCoefficients::zero(k, graph.arc_count());
    for j in 0..graph.arc_count() {
        union.amps[j] = ArcAmplitudes {
            a: mode_a.amps[j].a + mode_b.amps[j].a,
            b: mode_a.amps[j].b + mode_b.amps[j].b,
        };
    }

    // Caveat: an arc outside the two components must not hang off an active
    // vertex whose member arcs fail to balance flux on their own.
    let member: BTreeSet<ArcId> = spec_a
        .arc_ids
        .iter()
        .chain(&spec_b.arc_ids)
        .copied()
        .collect();
    let incidence = glued.incidence();
    for (vi, ends) in incidence.iter().enumerate() {
        let vertex = glued.vertices[vi].id;
        let active = ends
            .iter()
            .any(|e| member.contains(&glued.arcs[e.arc].id));
        if !active {
            continue;
        }
        let mut imbalance = 0.0;
        for e in ends {
            if !member.contains(&glued.arcs[e.arc].id) {
                continue;
            }
            let p = union.amps[e.arc];
            let l = glued.arcs[e.arc].length;
            imbalance += match e.end {
                crate::graph::End::Origin => p.a,
                crate::graph::End::Terminal => -(p.a * (k * l).cos() - p.b * (k * l).sin()),
            };
        }
        let has_external = ends
            .iter()
            .any(|e| !member.contains(&glued.arcs[e.arc].id));
        if has_external && imbalance.abs() > 1e-9 {
            return Err(Error::ShapeMismatch(format!(
                "external arc at active vertex {vertex} with unbalanced flux {imbalance:.3e}"
            )));
        }
    }

    let matrix = assemble_secular(&glued, k)?;
    let residual = matrix.residual(&union);
    if residual >= 1e-10 {
        return Err(Error::NotResonant { k, sigma_min: residual, threshold: 1e-10 });
    }
    let mut normalized = union;
    normalized.normalize(&glued)?;
    Ok((
        glued,
        Eigenpair { k, modes: vec![normalized], multiplicity: 1, residual },
    ))
}

// ── Nonexistence certificates ───────────────────────────────────────────

/// Configurations that can never carry a localized eigenvector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForbiddenShape {
    SingleArc,
    Leaf,
    TwoConnectedArcs,
    Degree3Star,
}

impl ForbiddenShape {
    pub fn arc_count(self) -> usize {
        match self {
            ForbiddenShape::SingleArc | ForbiddenShape::Leaf => 1,
            ForbiddenShape::TwoConnectedArcs => 2,
            ForbiddenShape::Degree3Star => 3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ForbiddenShape::SingleArc => "single arc",
            ForbiddenShape::Leaf => "leaf",
            ForbiddenShape::TwoConnectedArcs => "two connected arcs",
            ForbiddenShape::Degree3Star => "degree-3 star",
        }
    }
}

/// Rank certificate: the localization constraint system of the shape has
/// full column rank, so only the trivial mode satisfies it.
#[derive(Debug, Clone, Serialize)]
pub struct NonexistenceCertificate {
    pub shape: ForbiddenShape,
    pub lengths: Vec<f64>,
    pub k: f64,
    pub unknowns: usize,
    pub rank: usize,
    pub certified: bool,
}

impl fmt::Display for NonexistenceCertificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.certified {
            write!(
                f,
                "rank {}/{}: no localized eigenvector on a {} (k = {})",
                self.rank,
                self.unknowns,
                self.shape.label(),
                self.k
            )
        } else {
            write!(
                f,
                "rank {}/{}: constraint system is rank deficient on a {} (k = {})",
                self.rank,
                self.unknowns,
                self.shape.label(),
                self.k
            )
        }
    }
}

/// Assembles the exact localization constraints of a forbidden shape and
/// certifies that they only admit the zero solution by computing the
/// numerical rank of the system.
pub fn certify_nonexistence(
    shape: ForbiddenShape,
    lengths: &[f64],
    k: f64,
) -> Result<NonexistenceCertificate> {
    if lengths.len() != shape.arc_count() {
        return Err(Error::InvalidArgs(format!(
            "{} needs {} length(s), got {}",
            shape.label(),
            shape.arc_count(),
            lengths.len()
        )));
    }
    if !(k > 0.0) || lengths.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::InvalidArgs(
            "lengths and k must be positive".to_string(),
        ));
    }
    let s: Vec<f64> = lengths.iter().map(|&l| (k * l).sin()).collect();
    let c: Vec<f64> = lengths.iter().map(|&l| (k * l).cos()).collect();

    let rows: Vec<Vec<f64>> = match shape {
        ForbiddenShape::SingleArc => vec![
            // Value and outgoing flux must vanish at both embedded ends.
            vec![0.0, 1.0],
            vec![s[0], c[0]],
            vec![1.0, 0.0],
            vec![c[0], -s[0]],
        ],
        ForbiddenShape::Leaf => vec![
            // Embedded end: value and flux vanish; free end: Neumann.
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![c[0], -s[0]],
        ],
        ForbiddenShape::TwoConnectedArcs => vec![
            // Shared vertex: values vanish and fluxes balance; far ends are
            // embedded, so value and flux vanish arc by arc.
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
            vec![s[0], c[0], 0.0, 0.0],
            vec![0.0, 0.0, s[1], c[1]],
            vec![1.0, 0.0, 1.0, 0.0],
            vec![c[0], -s[0], 0.0, 0.0],
            vec![0.0, 0.0, c[1], -s[1]],
        ],
        ForbiddenShape::Degree3Star => {
            // Flux balance at the center plus value and flux vanishing at
            // the three embedded far ends.
            let mut rows = vec![vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0]];
            for j in 0..3 {
                let mut flux = vec![0.0; 6];
                flux[2 * j] = c[j];
                flux[2 * j + 1] = -s[j];
                rows.push(flux);
                let mut value = vec![0.0; 6];
                value[2 * j] = s[j];
                value[2 * j + 1] = c[j];
                rows.push(value);
            }
            rows
        }
    };

    let unknowns = rows[0].len();
    let matrix = DMatrix::from_row_iterator(
        rows.len(),
        unknowns,
        rows.iter().flat_map(|r| r.iter().copied()),
    );
    let sv = matrix.svd(false, false).singular_values;
    let sigma_max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let rank = sv.iter().filter(|&&x| x > 1e-10 * sigma_max.max(1.0)).count();
    Ok(NonexistenceCertificate {
        shape,
        lengths: lengths.to_vec(),
        k,
        unknowns,
        rank,
        certified: rank == unknowns,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::MetricGraph;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cycle_check_basic() {
        let spec = check_cycle(&[2.0 * PI, 3.0 * PI, 7.0 * PI], 64, 1e-9).expect("resonant");
        assert_eq!(spec.integers, vec![2, 3, 7]);
        assert_relative_eq!(spec.k, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn cycle_check_parity_doubling() {
        let spec = check_cycle(&[PI, PI, PI], 64, 1e-9).expect("doubled tuple");
        assert_eq!(spec.integers, vec![2, 2, 2]);
        assert_relative_eq!(spec.k, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn cycle_check_irrational_absent() {
        assert!(check_cycle(&[1.0, std::f64::consts::SQRT_2, PI], 64, 1e-9).is_none());
    }

    #[test]
    fn pumpkin_check_same_parity() {
        let spec = check_pumpkin(&[PI, 3.0 * PI], 64, 1e-9).expect("resonant");
        assert_eq!(spec.integers, vec![1, 3]);
        assert_relative_eq!(spec.k, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn pumpkin_check_mixed_parity_doubles() {
        let spec = check_pumpkin(&[PI, 2.0 * PI], 64, 1e-9).expect("doubled");
        assert_eq!(spec.integers, vec![2, 4]);
        assert_relative_eq!(spec.k, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn two_cycle_routed_to_pumpkin() {
        let spec = check_cycle(&[PI, 3.0 * PI], 64, 1e-9).expect("pumpkin");
        assert_eq!(spec.kind, ShapeKind::Pumpkin);
    }

    #[test]
    fn leaves_check() {
        let spec = check_leaves(&[1.0, 3.0], 64, 1e-9).expect("resonant");
        assert_eq!(spec.integers, vec![1, 3]);
        assert_relative_eq!(spec.k, PI / 2.0, epsilon = 1e-12);
        assert!(check_leaves(&[1.0, 2.0], 63, 1e-9).is_none());
    }

    #[test]
    fn leaves_three_way() {
        let spec = check_leaves(&[1.0, 3.0, 5.0], 64, 1e-9).expect("resonant");
        assert_eq!(spec.integers, vec![1, 3, 5]);
        assert_eq!(spec.expected_multiplicity(), 2);
    }

    #[test]
    fn construct_triangle_mode() {
        let g = MetricGraph::polygon(&[2.0 * PI, 3.0 * PI, 7.0 * PI]);
        let spec = check_cycle(&[2.0 * PI, 3.0 * PI, 7.0 * PI], 64, 1e-9)
            .unwrap()
            .with_arc_ids(&[1, 2, 3]);
        let pair = construct_mode(&g, &spec).unwrap();
        assert_eq!(pair.multiplicity, 1);
        assert!(pair.residual < 1e-10);
        let mode = &pair.modes[0];
        // Pure sine on every active arc, equal magnitudes.
        let mags: Vec<f64> = mode.amps.iter().map(|p| p.a.abs()).collect();
        assert!(mode.amps.iter().all(|p| p.b.abs() < 1e-12));
        assert_relative_eq!(mags[0], mags[1], epsilon = 1e-12);
        assert_relative_eq!(mags[0], mags[2], epsilon = 1e-12);
    }

    #[test]
    fn construct_mode_on_reversed_arcs() {
        // Same triangle but with one arc stored against the traversal.
        let g = MetricGraph::from_arcs(&[
            (1, 1, 2, 2.0 * PI),
            (2, 3, 2, 3.0 * PI),
            (3, 3, 1, 7.0 * PI),
        ]);
        let spec = ResonanceSpec {
            kind: ShapeKind::Cycle,
            arc_ids: vec![1, 2, 3],
            integers: vec![2, 3, 7],
            k: 1.0,
        };
        let pair = construct_mode(&g, &spec).unwrap();
        assert!(pair.residual < 1e-10);
    }

    #[test]
    fn construct_pumpkin_multiplicity() {
        let g = MetricGraph::pumpkin(&[PI, 3.0 * PI, 5.0 * PI]);
        let spec = check_pumpkin(&[PI, 3.0 * PI, 5.0 * PI], 64, 1e-9)
            .unwrap()
            .with_arc_ids(&[1, 2, 3]);
        assert_eq!(spec.expected_multiplicity(), 2);
        let pair = construct_mode(&g, &spec).unwrap();
        assert_eq!(pair.multiplicity, 2);
        assert!(pair.residual < 1e-10);
        // Sine coefficients of each null vector sum to zero.
        for mode in &pair.modes {
            let sum: f64 = mode.amps.iter().map(|p| p.a).sum();
            assert!(sum.abs() < 1e-10, "sum of amplitudes {sum}");
        }
    }

    #[test]
    fn construct_leaf_star() {
        let g = MetricGraph::star(&[1.0, 3.0, 5.0]);
        let spec = check_leaves(&[1.0, 3.0, 5.0], 64, 1e-9)
            .unwrap()
            .with_arc_ids(&[1, 2, 3]);
        let pair = construct_mode(&g, &spec).unwrap();
        assert_eq!(pair.multiplicity, 2);
        assert!(pair.residual < 1e-10);
    }

    #[test]
    fn shape_mismatch_detected() {
        let g = MetricGraph::star(&[1.0, 3.0]);
        let spec = ResonanceSpec {
            kind: ShapeKind::Cycle,
            arc_ids: vec![1, 2],
            integers: vec![1, 3],
            k: PI / 2.0,
        };
        assert!(construct_mode(&g, &spec).is_err());
    }

    #[test]
    fn tune_triangle_to_target() {
        let g = crate::graph::g14();
        let (tuned, spec) = tune_lengths(&g, &[1, 3, 5], ShapeKind::Cycle, 1.133761002).unwrap();
        assert_eq!(spec.integers, vec![4, 2, 2]);
        let l1 = tuned.arcs[tuned.arc_index(1).unwrap()].length;
        let l3 = tuned.arcs[tuned.arc_index(3).unwrap()].length;
        let l5 = tuned.arcs[tuned.arc_index(5).unwrap()].length;
        assert_relative_eq!(l1, 4.0 * PI / 1.133761002, epsilon = 1e-12);
        assert_relative_eq!(l3, 2.0 * PI / 1.133761002, epsilon = 1e-12);
        assert_relative_eq!(l5, l3, epsilon = 1e-12);
        // The tuned triangle really resonates.
        let pair = construct_mode(&tuned, &spec).unwrap();
        assert!(pair.residual < 1e-10);
    }

    #[test]
    fn tune_is_fixed_point_when_already_resonant() {
        let g = MetricGraph::polygon(&[2.0 * PI, 3.0 * PI, 7.0 * PI]);
        let (tuned, spec) = tune_lengths(&g, &[1, 2, 3], ShapeKind::Cycle, 1.0).unwrap();
        assert_eq!(spec.integers, vec![2, 3, 7]);
        for (a, b) in g.arcs.iter().zip(&tuned.arcs) {
            assert_relative_eq!(a.length, b.length, epsilon = 1e-12);
        }
    }

    #[test]
    fn tune_pumpkin_with_rounding() {
        let g = MetricGraph::pumpkin(&[3.0, 9.1]);
        let (tuned, spec) = tune_lengths(&g, &[1, 2], ShapeKind::Pumpkin, 1.0).unwrap();
        assert_eq!(spec.integers, vec![1, 3]);
        assert_relative_eq!(tuned.arcs[0].length, PI, epsilon = 1e-12);
        assert_relative_eq!(tuned.arcs[1].length, 3.0 * PI, epsilon = 1e-12);
    }

    #[test]
    fn join_triangle_and_pumpkin() {
        // Disjoint components in one graph: triangle on vertices 1-3,
        // pumpkin on 4-5.
        let mut g = MetricGraph::from_arcs(&[
            (1, 1, 2, 2.0 * PI),
            (2, 2, 3, 3.0 * PI),
            (3, 3, 1, 7.0 * PI),
            (4, 4, 5, PI),
            (5, 4, 5, 3.0 * PI),
        ]);
        g.allow_disconnected = true;
        let tri = check_cycle(&[2.0 * PI, 3.0 * PI, 7.0 * PI], 64, 1e-9)
            .unwrap()
            .with_arc_ids(&[1, 2, 3]);
        let pump = check_pumpkin(&[PI, 3.0 * PI], 64, 1e-9)
            .unwrap()
            .with_arc_ids(&[4, 5]);
        let (glued, pair) = join_composite(&tri, &pump, &g, (3, 4)).unwrap();
        assert_eq!(glued.vertex_count(), 4);
        assert!(pair.residual < 1e-10);
        let (criterion, _) =
            crate::localization::localization_criterion(&pair.modes[0], &glued).unwrap();
        assert_relative_eq!(criterion, 0.2, epsilon = 1e-10);
    }

    #[test]
    fn join_rejects_frequency_mismatch() {
        let mut g = MetricGraph::from_arcs(&[
            (1, 1, 2, 2.0 * PI),
            (2, 2, 3, 3.0 * PI),
            (3, 3, 1, 7.0 * PI),
            (4, 4, 5, PI / 2.0),
            (5, 4, 5, 3.0 * PI / 2.0),
        ]);
        g.allow_disconnected = true;
        let tri = check_cycle(&[2.0 * PI, 3.0 * PI, 7.0 * PI], 64, 1e-9)
            .unwrap()
            .with_arc_ids(&[1, 2, 3]);
        let pump = check_pumpkin(&[PI / 2.0, 3.0 * PI / 2.0], 64, 1e-9)
            .unwrap()
            .with_arc_ids(&[4, 5]);
        assert!(matches!(
            join_composite(&tri, &pump, &g, (3, 4)),
            Err(Error::KMismatch(_, _))
        ));
    }

    #[test]
    fn certificates_for_fixed_examples() {
        let c = certify_nonexistence(ForbiddenShape::SingleArc, &[1.7], 2.3).unwrap();
        assert_eq!((c.rank, c.unknowns), (2, 2));
        assert!(c.certified);
        assert!(c.to_string().starts_with("rank 2/2: no localized eigenvector"));

        let c = certify_nonexistence(ForbiddenShape::Degree3Star, &[1.0, 1.3, 2.1], 0.77).unwrap();
        assert_eq!((c.rank, c.unknowns), (6, 6));

        let c = certify_nonexistence(ForbiddenShape::TwoConnectedArcs, &[PI, PI], 1.0).unwrap();
        assert_eq!((c.rank, c.unknowns), (4, 4));

        let c = certify_nonexistence(ForbiddenShape::Leaf, &[0.9], 1.4).unwrap();
        assert_eq!((c.rank, c.unknowns), (2, 2));
    }

    #[test]
    fn certificates_hold_for_random_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(20_240_101);
        for shape in [
            ForbiddenShape::SingleArc,
            ForbiddenShape::Leaf,
            ForbiddenShape::TwoConnectedArcs,
            ForbiddenShape::Degree3Star,
        ] {
            for _ in 0..100 {
                let lengths: Vec<f64> = (0..shape.arc_count())
                    .map(|_| rng.random_range(0.1..10.0))
                    .collect();
                let k = rng.random_range(0.05..20.0);
                let cert = certify_nonexistence(shape, &lengths, k).unwrap();
                assert!(
                    cert.certified,
                    "{:?} failed at lengths {:?}, k = {}",
                    shape, lengths, k
                );
            }
        }
    }

    #[test]
    fn spec_serialization_shape() {
        let spec = ResonanceSpec {
            kind: ShapeKind::Cycle,
            arc_ids: vec![6, 7, 13],
            integers: vec![2, 3, 7],
            k: 1.0,
        };
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains("\"kind\":\"cycle\""));
        assert!(json.contains("\"arcs\":[6,7,13]"));
        assert!(json.contains("\"n\":[2,3,7]"));
        let back: ResonanceSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
    }
}
