//! Metric graph data model: vertices, oriented arcs with positive lengths,
//! validation, degree-2 contraction and fixture graphs.
//!
//! Every arc is parameterized by x in [0, l] running from its origin vertex
//! (x = 0) to its terminal vertex (x = l). All other modules treat a
//! [`MetricGraph`] as immutable once built.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type VertexId = i64;
pub type ArcId = i64;

/// Which end of an arc is incident to a vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum End {
    Origin,
    Terminal,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vertex {
    pub id: VertexId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<f64>,
}

impl Vertex {
    pub fn new(id: VertexId) -> Self {
        Vertex { id, x: None, y: None }
    }

    pub fn at(id: VertexId, x: f64, y: f64) -> Self {
        Vertex { id, x: Some(x), y: Some(y) }
    }
}

/// An oriented arc of the metric graph. `length` is measured in
/// dimensionless graph-metric units and must be positive.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Arc {
    pub id: ArcId,
    pub from: VertexId,
    pub to: VertexId,
    pub length: f64,
}

/// An arc end incident to some vertex, by arc *index* into `MetricGraph::arcs`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IncidentEnd {
    pub arc: usize,
    pub end: End,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricGraph {
    pub vertices: Vec<Vertex>,
    pub arcs: Vec<Arc>,
    /// Suppresses the DISCONNECTED validation issue for graphs that are
    /// intentionally built from several components (e.g. before gluing).
    #[serde(default, skip_serializing)]
    pub allow_disconnected: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum IssueCode {
    NonpositiveLength,
    DanglingEndpoint,
    DuplicateArcId,
    DuplicateVertexId,
    DegreeTwoVertex,
    Disconnected,
}

#[derive(Debug, Clone, Serialize)]
pub struct Issue {
    pub code: IssueCode,
    pub message: String,
    /// Offending arc or vertex id, when the issue is tied to one element.
    pub element: Option<i64>,
}

/// Outcome of [`MetricGraph::validate`]. `ok` is true iff `issues` is empty.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub issues: Vec<Issue>,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ok {
            write!(f, "ok")
        } else {
            for issue in &self.issues {
                writeln!(f, "{:?}: {}", issue.code, issue.message)?;
            }
            Ok(())
        }
    }
}

impl MetricGraph {
    pub fn new(vertices: Vec<Vertex>, arcs: Vec<Arc>) -> Self {
        MetricGraph { vertices, arcs, allow_disconnected: false }
    }

    /// Builds a graph from `(id, from, to, length)` tuples; vertices are
    /// created on demand without coordinates.
    pub fn from_arcs(arcs: &[(ArcId, VertexId, VertexId, f64)]) -> Self {
        let mut seen = BTreeSet::new();
        for &(_, from, to, _) in arcs {
            seen.insert(from);
            seen.insert(to);
        }
        MetricGraph::new(
            seen.into_iter().map(Vertex::new).collect(),
            arcs.iter()
                .map(|&(id, from, to, length)| Arc { id, from, to, length })
                .collect(),
        )
    }

    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn total_length(&self) -> f64 {
        self.arcs.iter().map(|a| a.length).sum()
    }

    pub fn vertex_index(&self, id: VertexId) -> Option<usize> {
        self.vertices.iter().position(|v| v.id == id)
    }

    pub fn arc_index(&self, id: ArcId) -> Option<usize> {
        self.arcs.iter().position(|a| a.id == id)
    }

    /// Incident arc ends per vertex index, sorted by (arc id, end) so that
    /// downstream row assembly is deterministic.
    pub fn incidence(&self) -> Vec<Vec<IncidentEnd>> {
        let index: BTreeMap<VertexId, usize> =
            self.vertices.iter().enumerate().map(|(i, v)| (v.id, i)).collect();
        let mut inc = vec![Vec::new(); self.vertices.len()];
        for (ai, arc) in self.arcs.iter().enumerate() {
            if let Some(&vi) = index.get(&arc.from) {
                inc[vi].push(IncidentEnd { arc: ai, end: End::Origin });
            }
            if let Some(&vi) = index.get(&arc.to) {
                inc[vi].push(IncidentEnd { arc: ai, end: End::Terminal });
            }
        }
        for ends in &mut inc {
            ends.sort_by_key(|e| (self.arcs[e.arc].id, e.end));
        }
        inc
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.incidence().iter().map(|ends| ends.len()).collect()
    }

    /// Vertex indices reachable from `start` over arcs, ignoring orientation.
    fn component_of(&self, start: usize, inc: &[Vec<IncidentEnd>]) -> BTreeSet<usize> {
        let index: BTreeMap<VertexId, usize> =
            self.vertices.iter().enumerate().map(|(i, v)| (v.id, i)).collect();
        let mut seen = BTreeSet::new();
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            if !seen.insert(v) {
                continue;
            }
            for e in &inc[v] {
                let arc = &self.arcs[e.arc];
                for id in [arc.from, arc.to] {
                    if let Some(&w) = index.get(&id) {
                        if !seen.contains(&w) {
                            stack.push(w);
                        }
                    }
                }
            }
        }
        seen
    }

    pub fn is_connected(&self) -> bool {
        if self.vertices.is_empty() {
            return true;
        }
        let inc = self.incidence();
        self.component_of(0, &inc).len() == self.vertices.len()
    }

    /// Checks structural soundness. All problems are reported, none thrown.
    pub fn validate(&self) -> ValidationReport {
        let mut issues = Vec::new();

        let mut vertex_ids = BTreeSet::new();
        for v in &self.vertices {
            if !vertex_ids.insert(v.id) {
                issues.push(Issue {
                    code: IssueCode::DuplicateVertexId,
                    message: format!("vertex id {} appears more than once", v.id),
                    element: Some(v.id),
                });
            }
        }

        let mut arc_ids = BTreeSet::new();
        for a in &self.arcs {
            if !arc_ids.insert(a.id) {
                issues.push(Issue {
                    code: IssueCode::DuplicateArcId,
                    message: format!("arc id {} appears more than once", a.id),
                    element: Some(a.id),
                });
            }
            if !(a.length > 0.0) {
                issues.push(Issue {
                    code: IssueCode::NonpositiveLength,
                    message: format!("arc {} has non-positive length {}", a.id, a.length),
                    element: Some(a.id),
                });
            }
            for id in [a.from, a.to] {
                if self.vertex_index(id).is_none() {
                    issues.push(Issue {
                        code: IssueCode::DanglingEndpoint,
                        message: format!("arc {} references missing vertex {}", a.id, id),
                        element: Some(a.id),
                    });
                }
            }
        }

        // Degree checks only make sense when arcs reference real vertices.
        if issues.iter().all(|i| i.code != IssueCode::DanglingEndpoint) {
            for (vi, d) in self.degrees().iter().enumerate() {
                if *d == 2 {
                    issues.push(Issue {
                        code: IssueCode::DegreeTwoVertex,
                        message: format!(
                            "vertex {} has degree 2 and should be merged away",
                            self.vertices[vi].id
                        ),
                        element: Some(self.vertices[vi].id),
                    });
                }
            }
            if !self.allow_disconnected && !self.is_connected() {
                issues.push(Issue {
                    code: IssueCode::Disconnected,
                    message: "graph has more than one connected component".to_string(),
                    element: None,
                });
            }
        }

        ValidationReport { ok: issues.is_empty(), issues }
    }

    /// Contracts every maximal chain running through degree-2 vertices into a
    /// single arc whose length is the sum of the chain lengths. Arcs that are
    /// not part of any chain keep their id, orientation and length; merged
    /// chains take the smallest id among their members. The result is sorted
    /// by arc id and contains no degree-2 vertices.
    pub fn merge_degree_two(&self) -> Result<MetricGraph> {
        let inc = self.incidence();
        let degrees: Vec<usize> = inc.iter().map(|e| e.len()).collect();
        let anchors: Vec<usize> =
            (0..self.vertices.len()).filter(|&v| degrees[v] != 2).collect();

        if self.arcs.is_empty() {
            return Ok(self.clone());
        }
        if anchors.is_empty() {
            // Every vertex has degree 2: nothing to merge toward.
            return Err(Error::CycleOfDegreeTwo);
        }

        let vindex: BTreeMap<VertexId, usize> =
            self.vertices.iter().enumerate().map(|(i, v)| (v.id, i)).collect();
        let other_vertex = |e: IncidentEnd| -> usize {
            let arc = &self.arcs[e.arc];
            let id = match e.end {
                End::Origin => arc.to,
                End::Terminal => arc.from,
            };
            vindex[&id]
        };

        let mut visited = vec![false; self.arcs.len()];
        let mut merged: Vec<Arc> = Vec::new();

        for &a in &anchors {
            for &start in &inc[a] {
                if visited[start.arc] {
                    continue;
                }
                // Walk from the anchor through degree-2 vertices.
                let mut chain = vec![start.arc];
                visited[start.arc] = true;
                let mut current = other_vertex(start);
                while degrees[current] == 2 {
                    // The arrival arc is already visited, so the unvisited
                    // end is the unique continuation.
                    let next = inc[current].iter().copied().find(|e| !visited[e.arc]);
                    let Some(next) = next else { break };
                    visited[next.arc] = true;
                    chain.push(next.arc);
                    current = other_vertex(next);
                }
                if chain.len() == 1 {
                    merged.push(self.arcs[start.arc].clone());
                } else {
                    let length = chain.iter().map(|&i| self.arcs[i].length).sum();
                    let id = chain.iter().map(|&i| self.arcs[i].id).min().unwrap();
                    merged.push(Arc {
                        id,
                        from: self.vertices[a].id,
                        to: self.vertices[current].id,
                        length,
                    });
                }
            }
        }

        if visited.iter().any(|v| !v) {
            // Unreached arcs live in components made only of degree-2
            // vertices (pure cycles).
            return Err(Error::CycleOfDegreeTwo);
        }

        merged.sort_by_key(|a| a.id);
        let kept: BTreeSet<VertexId> = anchors.iter().map(|&v| self.vertices[v].id).collect();
        let vertices = self
            .vertices
            .iter()
            .filter(|v| kept.contains(&v.id))
            .cloned()
            .collect();
        Ok(MetricGraph {
            vertices,
            arcs: merged,
            allow_disconnected: self.allow_disconnected,
        })
    }

    /// Identifies vertex `b` with vertex `a`: arcs incident to `b` are
    /// re-pointed to `a` and `b` is removed. Used to join two resonant
    /// subgraphs at a vertex.
    pub fn glue_vertices(&self, a: VertexId, b: VertexId) -> Result<MetricGraph> {
        if self.vertex_index(a).is_none() || self.vertex_index(b).is_none() {
            return Err(Error::InvalidArgs(format!(
                "glue vertices {a} and {b} must both exist"
            )));
        }
        if a == b {
            return Ok(self.clone());
        }
        let mut g = self.clone();
        for arc in &mut g.arcs {
            if arc.from == b {
                arc.from = a;
            }
            if arc.to == b {
                arc.to = a;
            }
        }
        g.vertices.retain(|v| v.id != b);
        Ok(g)
    }

    // ── Serialization ──────────────────────────────────────────────────

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<MetricGraph> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<MetricGraph> {
        MetricGraph::from_json(&std::fs::read_to_string(path)?)
    }

    // ── Elementary builders used by tests and the resonance module ─────

    /// Single arc of length `l` between two degree-1 vertices.
    pub fn single_arc(l: f64) -> MetricGraph {
        MetricGraph::from_arcs(&[(1, 1, 2, l)])
    }

    /// Closed polygon with the given side lengths; vertex i joins side i-1
    /// to side i.
    pub fn polygon(lengths: &[f64]) -> MetricGraph {
        let p = lengths.len() as i64;
        let arcs: Vec<(ArcId, VertexId, VertexId, f64)> = lengths
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                let i = i as i64;
                (i + 1, i + 1, (i + 1) % p + 1, l)
            })
            .collect();
        MetricGraph::from_arcs(&arcs)
    }

    /// Pumpkin: all arcs run in parallel between vertices 1 and 2.
    pub fn pumpkin(lengths: &[f64]) -> MetricGraph {
        let arcs: Vec<(ArcId, VertexId, VertexId, f64)> = lengths
            .iter()
            .enumerate()
            .map(|(i, &l)| (i as i64 + 1, 1, 2, l))
            .collect();
        MetricGraph::from_arcs(&arcs)
    }

    /// Star of leaves: every arc runs from the shared center (vertex 1) to
    /// its own degree-1 endpoint.
    pub fn star(lengths: &[f64]) -> MetricGraph {
        let arcs: Vec<(ArcId, VertexId, VertexId, f64)> = lengths
            .iter()
            .enumerate()
            .map(|(i, &l)| (i as i64 + 1, 1, i as i64 + 2, l))
            .collect();
        MetricGraph::from_arcs(&arcs)
    }
}

/// The bundled 14-arc fixture. Topology is derived from the IEEE 14-bus test
/// network: contracting its degree-2 buses leaves 8 junctions joined by 14
/// arcs (three of them parallel pairs). Arc lengths are the known fixture
/// values; the arc-to-junction assignment is a best-effort reconstruction
/// chosen so that arcs 1-3-5 and 6-7-13 form triangles and arcs 5-7-8-9 form
/// a quadrilateral, with vertex 6 the single leaf.
pub fn g14() -> MetricGraph {
    let vertices = vec![
        Vertex::at(1, 1.0, 0.0),
        Vertex::at(2, 4.0, 1.0),
        Vertex::at(3, 2.5, 2.0),
        Vertex::at(4, 3.0, 4.5),
        Vertex::at(5, 5.5, 2.5),
        Vertex::at(6, 7.0, 2.5),
        Vertex::at(7, 5.0, 4.0),
        Vertex::at(8, 1.5, 5.5),
    ];
    let arcs = vec![
        (1, 1, 3, 11.91371443),
        (2, 1, 3, 7.08276253),
        (3, 1, 2, 6.0),
        (4, 1, 2, 2.236067977),
        (5, 2, 3, 4.123105626),
        (6, 2, 5, 1.414213562),
        (7, 2, 7, 2.0),
        (8, 3, 4, 1.0),
        (9, 4, 7, 4.7169892),
        (10, 4, 8, 4.472135955),
        (11, 5, 6, 2.0),
        (12, 4, 8, 2.0),
        (13, 5, 7, 1.414213562),
        (14, 7, 8, 4.472135955),
    ];
    MetricGraph::new(
        vertices,
        arcs.into_iter()
            .map(|(id, from, to, length)| Arc { id, from, to, length })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_arc_is_valid() {
        let g = MetricGraph::single_arc(std::f64::consts::PI);
        assert!(g.validate().ok);
    }

    #[test]
    fn zero_length_reported() {
        let g = MetricGraph::from_arcs(&[(1, 1, 2, 0.0)]);
        let report = g.validate();
        assert!(!report.ok);
        assert!(report.issues.iter().any(|i| i.code == IssueCode::NonpositiveLength));
    }

    #[test]
    fn degree_two_reported() {
        let g = MetricGraph::from_arcs(&[(1, 1, 2, 1.0), (2, 2, 3, 2.0)]);
        let report = g.validate();
        assert!(report.issues.iter().any(|i| i.code == IssueCode::DegreeTwoVertex));
    }

    #[test]
    fn dangling_endpoint_reported() {
        let mut g = MetricGraph::single_arc(1.0);
        g.vertices.pop();
        let report = g.validate();
        assert!(report.issues.iter().any(|i| i.code == IssueCode::DanglingEndpoint));
    }

    #[test]
    fn merge_path_of_three() {
        let g = MetricGraph::from_arcs(&[(1, 1, 2, 1.0), (2, 2, 3, 2.0)]);
        let m = g.merge_degree_two().unwrap();
        assert_eq!(m.arc_count(), 1);
        assert_eq!(m.arcs[0].length, 3.0);
        assert_eq!((m.arcs[0].from, m.arcs[0].to), (1, 3));
        assert!(m.validate().issues.iter().all(|i| i.code != IssueCode::DegreeTwoVertex));
    }

    #[test]
    fn merge_identity_when_no_degree_two() {
        let g = g14();
        let m = g.merge_degree_two().unwrap();
        assert_eq!(m.arc_count(), g.arc_count());
        for (a, b) in g.arcs.iter().zip(&m.arcs) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.from, b.from);
            assert_eq!(a.to, b.to);
            assert_eq!(a.length, b.length);
        }
    }

    #[test]
    fn merge_long_chain() {
        // Two degree-3 hubs joined by a chain of three degree-2 vertices,
        // with stub leaves to keep the hubs at degree 3.
        let g = MetricGraph::from_arcs(&[
            (1, 1, 10, 1.0),
            (2, 10, 11, 1.0),
            (3, 11, 12, 1.0),
            (4, 12, 2, 1.0),
            (5, 1, 3, 0.5),
            (6, 1, 4, 0.5),
            (7, 2, 5, 0.5),
            (8, 2, 6, 0.5),
        ]);
        let m = g.merge_degree_two().unwrap();
        let chain = m.arcs.iter().find(|a| a.length == 4.0).expect("merged chain");
        assert_eq!((chain.from, chain.to), (1, 2));
        assert_eq!(m.arc_count(), 5);
    }

    #[test]
    fn merge_is_idempotent_and_preserves_length() {
        let g = MetricGraph::from_arcs(&[
            (1, 1, 2, 1.0),
            (2, 2, 3, 2.0),
            (3, 3, 4, 0.7),
            (4, 1, 4, 0.3),
            (5, 1, 5, 1.1),
            (6, 4, 6, 0.9),
        ]);
        let once = g.merge_degree_two().unwrap();
        let twice = once.merge_degree_two().unwrap();
        assert!((g.total_length() - once.total_length()).abs() < 1e-12);
        assert_eq!(once.arc_count(), twice.arc_count());
        for (a, b) in once.arcs.iter().zip(&twice.arcs) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.length, b.length);
        }
    }

    #[test]
    fn pure_cycle_is_an_error() {
        let g = MetricGraph::polygon(&[1.0, 1.0, 1.0]);
        // A bare triangle has only degree-2 vertices.
        assert!(matches!(g.merge_degree_two(), Err(Error::CycleOfDegreeTwo)));
    }

    #[test]
    fn lasso_merges_to_self_loop() {
        let g = MetricGraph::from_arcs(&[
            (1, 1, 2, 1.0),
            (2, 2, 3, 1.0),
            (3, 3, 1, 1.0),
            (4, 1, 4, 2.0),
            (5, 1, 5, 2.0),
        ]);
        let m = g.merge_degree_two().unwrap();
        let loop_arc = m.arcs.iter().find(|a| a.from == a.to).expect("self loop");
        assert!((loop_arc.length - 3.0).abs() < 1e-12);
    }

    #[test]
    fn g14_fixture_shape() {
        let g = g14();
        assert_eq!(g.arc_count(), 14);
        assert_eq!(g.vertex_count(), 8);
        assert_eq!(g.arcs[0].length, 11.91371443);
        assert!(g.validate().ok);
        // Vertex 6 is the single leaf.
        let degs = g.degrees();
        let leaf_ids: Vec<VertexId> = g
            .vertices
            .iter()
            .zip(&degs)
            .filter(|(_, &d)| d == 1)
            .map(|(v, _)| v.id)
            .collect();
        assert_eq!(leaf_ids, vec![6]);
    }

    #[test]
    fn json_round_trip() {
        let g = g14();
        let text = g.to_json().unwrap();
        let back = MetricGraph::from_json(&text).unwrap();
        assert_eq!(back.arc_count(), 14);
        for (a, b) in g.arcs.iter().zip(&back.arcs) {
            assert_eq!(a.length, b.length);
        }
    }
}
