//! Explicit finite-difference solver for the wave equation on a metric
//! graph (unit wave speed). Arc interiors use the standard three-point
//! second difference with leapfrog time stepping; every vertex holds one
//! shared unknown updated by an h-weighted conservative flux balance, which
//! enforces continuity exactly and the Kirchhoff condition to second order.
//! Leaves are Neumann by default; a leaf may instead carry a Sommerfeld
//! radiation condition eps * u_t = u_x that lets energy exit.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ArcId, MetricGraph};
use crate::spectral::Eigenpair;

/// Per-arc discretization: `n` segments of width `h = l / n`; interior
/// nodes 1..n-1 live in the global vector at `offset..offset + n - 1`.
#[derive(Debug, Clone)]
pub struct ArcMesh {
    pub n: usize,
    pub h: f64,
    pub offset: usize,
    pub from_vertex: usize,
    pub to_vertex: usize,
}

/// Conservative vertex stencil: u_tt(v) = sum_j coeff_j (u_nbr - u_v) over
/// incident arc ends, with coeff_j = (2 / sum_j h_j) / h_j.
#[derive(Debug, Clone)]
struct VertexStencil {
    terms: Vec<(usize, f64)>,
    /// Lumped mass weight sum_j h_j / 2 (zero for isolated vertices).
    weight: f64,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub arcs: Vec<ArcMesh>,
    pub vertex_count: usize,
    pub unknowns: usize,
    pub dt: f64,
    pub cfl: f64,
    stencils: Vec<VertexStencil>,
}

impl Mesh {
    /// Global index of node `i` on arc `j` (0 and n map to the shared
    /// vertex unknowns).
    pub fn node(&self, arc: usize, i: usize) -> usize {
        let am = &self.arcs[arc];
        if i == 0 {
            am.from_vertex
        } else if i == am.n {
            am.to_vertex
        } else {
            am.offset + i - 1
        }
    }

    /// Arc coordinate of node `i` on arc `j`.
    pub fn position(&self, arc: usize, i: usize) -> f64 {
        i as f64 * self.arcs[arc].h
    }

    /// Trapezoid (lumped-mass) weight of a global node.
    fn mass_weight(&self, idx: usize) -> f64 {
        if idx < self.vertex_count {
            self.stencils[idx].weight
        } else {
            // Interior node: locate its arc. Offsets are sorted.
            let arc = self
                .arcs
                .iter()
                .rfind(|am| am.offset <= idx)
                .expect("interior index belongs to an arc");
            arc.h
        }
    }
}

/// Discretizes the graph: n_j = max(4, round(l_j / dx_target)) segments per
/// arc, shared vertex unknowns, dt = cfl * min_j h_j.
pub fn discretize(graph: &MetricGraph, dx_target: f64, cfl: f64) -> Result<Mesh> {
    if !(dx_target > 0.0) {
        return Err(Error::InvalidDx(dx_target));
    }
    if !(cfl > 0.0 && cfl < 1.0) {
        return Err(Error::CflViolation { dt: cfl, bound: 1.0 });
    }
    let vertex_count = graph.vertex_count();
    let mut arcs = Vec::with_capacity(graph.arc_count());
    let mut offset = vertex_count;
    let mut h_min = f64::INFINITY;
    for arc in &graph.arcs {
        let n = ((arc.length / dx_target).round() as usize).max(4);
        let h = arc.length / n as f64;
        h_min = h_min.min(h);
        arcs.push(ArcMesh {
            n,
            h,
            offset,
            from_vertex: graph.vertex_index(arc.from).expect("validated graph"),
            to_vertex: graph.vertex_index(arc.to).expect("validated graph"),
        });
        offset += n - 1;
    }
    let dt = cfl * h_min;

    let mut stencils = vec![VertexStencil { terms: Vec::new(), weight: 0.0 }; vertex_count];
    for am in &arcs {
        // First interior node as seen from each end (n >= 4 guarantees it
        // exists).
        stencils[am.from_vertex].terms.push((am.offset, am.h));
        stencils[am.from_vertex].weight += am.h / 2.0;
        stencils[am.to_vertex].terms.push((am.offset + am.n - 2, am.h));
        stencils[am.to_vertex].weight += am.h / 2.0;
    }
    for st in &mut stencils {
        let total: f64 = st.terms.iter().map(|&(_, h)| h).sum();
        if total > 0.0 {
            for term in &mut st.terms {
                // coeff_j = (2 / sum h) / h_j, stored in place of h_j.
                term.1 = 2.0 / (total * term.1);
            }
        }
    }

    Ok(Mesh { arcs, vertex_count, unknowns: offset, dt, cfl, stencils })
}

/// Boundary condition at a leaf vertex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Boundary {
    Neumann,
    Radiation { epsilon: f64 },
}

/// Discrete field: current and previous time levels plus per-vertex
/// boundary tags (ignored at interior vertices).
#[derive(Debug, Clone)]
pub struct WaveState {
    pub u: Vec<f64>,
    pub u_prev: Vec<f64>,
    pub t: f64,
    pub boundaries: Vec<Boundary>,
}

/// Spatial operator of the scheme (second differences plus conservative
/// vertex stencils, Neumann closure everywhere).
fn apply_operator(mesh: &Mesh, u: &[f64], out: &mut [f64]) {
    for (j, am) in mesh.arcs.iter().enumerate() {
        let inv_h2 = 1.0 / (am.h * am.h);
        for i in 1..am.n {
            let idx = mesh.node(j, i);
            out[idx] =
                (u[mesh.node(j, i - 1)] - 2.0 * u[idx] + u[mesh.node(j, i + 1)]) * inv_h2;
        }
    }
    for v in 0..mesh.vertex_count {
        let mut acc = 0.0;
        for &(nbr, coeff) in &mesh.stencils[v].terms {
            acc += coeff * (u[nbr] - u[v]);
        }
        out[v] = acc;
    }
}

impl WaveState {
    /// Builds a state from initial displacement and velocity samples using
    /// the second-order Taylor start u_prev = u - dt v + dt^2/2 L u.
    pub fn from_initial(
        mesh: &Mesh,
        u0: Vec<f64>,
        v0: &[f64],
        boundaries: Vec<Boundary>,
    ) -> Result<WaveState> {
        if u0.len() != mesh.unknowns || v0.len() != mesh.unknowns {
            return Err(Error::GraphMismatch(format!(
                "state length {} does not match mesh unknowns {}",
                u0.len(),
                mesh.unknowns
            )));
        }
        if boundaries.len() != mesh.vertex_count {
            return Err(Error::GraphMismatch(
                "boundary tags must cover every vertex".to_string(),
            ));
        }
        let mut lu = vec![0.0; mesh.unknowns];
        apply_operator(mesh, &u0, &mut lu);
        let dt = mesh.dt;
        let u_prev: Vec<f64> = (0..mesh.unknowns)
            .map(|i| u0[i] - dt * v0[i] + 0.5 * dt * dt * lu[i])
            .collect();
        Ok(WaveState { u: u0, u_prev, t: 0.0, boundaries })
    }

    /// One leapfrog step.
    pub fn step(&mut self, mesh: &Mesh) {
        let dt = mesh.dt;
        let dt2 = dt * dt;
        let mut u_next = vec![0.0; mesh.unknowns];

        // Arc interiors are independent; run them in parallel when the
        // mesh is large enough to pay for it.
        let u = &self.u;
        let u_prev = &self.u_prev;
        let (_, interior_next) = u_next.split_at_mut(mesh.vertex_count);
        let mut chunks: Vec<(usize, &mut [f64])> = Vec::with_capacity(mesh.arcs.len());
        let mut rest = interior_next;
        for (j, am) in mesh.arcs.iter().enumerate() {
            let (head, tail) = rest.split_at_mut(am.n - 1);
            chunks.push((j, head));
            rest = tail;
        }
        let update_arc = |j: usize, chunk: &mut [f64]| {
            let am = &mesh.arcs[j];
            let lambda2 = dt2 / (am.h * am.h);
            for i in 1..am.n {
                let idx = mesh.node(j, i);
                chunk[i - 1] = 2.0 * u[idx] - u_prev[idx]
                    + lambda2
                        * (u[mesh.node(j, i - 1)] - 2.0 * u[idx] + u[mesh.node(j, i + 1)]);
            }
        };
        if mesh.unknowns > 4096 {
            chunks
                .into_par_iter()
                .for_each(|(j, chunk)| update_arc(j, chunk));
        } else {
            for (j, chunk) in chunks {
                update_arc(j, chunk);
            }
        }

        // Vertex updates: conservative stencil, except radiation leaves
        // which advance by the one-sided upwind closure of eps u_t = u_x.
        for v in 0..mesh.vertex_count {
            match self.boundaries[v] {
                Boundary::Radiation { epsilon } if self.is_leaf(mesh, v) => {
                    let (nbr, h) = self.leaf_neighbor(mesh, v);
                    u_next[v] = u[v] - dt / (epsilon * h) * (u[v] - u[nbr]);
                }
                _ => {
                    let mut acc = 0.0;
                    for &(nbr, coeff) in &mesh.stencils[v].terms {
                        acc += coeff * (u[nbr] - u[v]);
                    }
                    u_next[v] = 2.0 * u[v] - u_prev[v] + dt2 * acc;
                }
            }
        }

        self.u_prev = std::mem::replace(&mut self.u, u_next);
        self.t += dt;
    }

    fn is_leaf(&self, mesh: &Mesh, v: usize) -> bool {
        mesh.stencils[v].terms.len() == 1
    }

    fn leaf_neighbor(&self, mesh: &Mesh, v: usize) -> (usize, f64) {
        for am in &mesh.arcs {
            if am.from_vertex == v {
                return (am.offset, am.h);
            }
            if am.to_vertex == v {
                return (am.offset + am.n - 2, am.h);
            }
        }
        unreachable!("leaf vertex must touch an arc");
    }

    /// Exactly conserved leapfrog energy for the all-Neumann scheme:
    /// kinetic part in the lumped mass norm plus the stiffness cross term
    /// a(u, u_prev) / 2.
    pub fn discrete_energy(&self, mesh: &Mesh) -> f64 {
        let dt = mesh.dt;
        let mut kinetic = 0.0;
        for i in 0..mesh.unknowns {
            let v = (self.u[i] - self.u_prev[i]) / dt;
            kinetic += mesh.mass_weight(i) * v * v;
        }
        let mut cross = 0.0;
        for (j, am) in mesh.arcs.iter().enumerate() {
            for i in 0..am.n {
                let (a, b) = (mesh.node(j, i), mesh.node(j, i + 1));
                cross += (self.u[b] - self.u[a]) * (self.u_prev[b] - self.u_prev[a]) / am.h;
            }
        }
        0.5 * kinetic + 0.5 * cross
    }
}

/// Per-edge energies integrated by the trapezoid rule: kinetic from the
/// half-step velocity (u - u_prev) / dt, potential from current
/// differences.
#[derive(Debug, Clone, Serialize)]
pub struct EnergyReport {
    pub t: f64,
    pub per_edge: Vec<f64>,
    pub total: f64,
}

pub fn edge_energy(state: &WaveState, mesh: &Mesh) -> EnergyReport {
    let dt = mesh.dt;
    let mut per_edge = Vec::with_capacity(mesh.arcs.len());
    for (j, am) in mesh.arcs.iter().enumerate() {
        let mut kinetic = 0.0;
        for i in 0..=am.n {
            let idx = mesh.node(j, i);
            let v = (state.u[idx] - state.u_prev[idx]) / dt;
            let w = if i == 0 || i == am.n { am.h / 2.0 } else { am.h };
            kinetic += w * v * v;
        }
        let mut potential = 0.0;
        for i in 0..am.n {
            let du = state.u[mesh.node(j, i + 1)] - state.u[mesh.node(j, i)];
            potential += du * du / am.h;
        }
        per_edge.push(0.5 * (kinetic + potential));
    }
    let total = per_edge.iter().sum();
    EnergyReport { t: state.t, per_edge, total }
}

/// Samples an eigenvector at the mesh nodes. Vertex nodes are written once
/// per incident arc; for an actual eigenvector all incident arcs agree
/// there by continuity.
pub fn sample_mode(mode: &crate::spectral::ModeCoefficients, mesh: &Mesh) -> Vec<f64> {
    let mut out = vec![0.0; mesh.unknowns];
    for (j, am) in mesh.arcs.iter().enumerate() {
        for i in 0..=am.n {
            out[mesh.node(j, i)] = mode.eval(j, mesh.position(j, i));
        }
    }
    out
}

/// Discrete broken trapezoid inner product of two node vectors.
fn discrete_inner(mesh: &Mesh, x: &[f64], y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (j, am) in mesh.arcs.iter().enumerate() {
        for i in 0..=am.n {
            let idx = mesh.node(j, i);
            let w = if i == 0 || i == am.n { am.h / 2.0 } else { am.h };
            acc += w * x[idx] * y[idx];
        }
    }
    acc
}

/// Displacement amplitudes a_q of the field against each eigenpair's modes:
/// a = <u, V> in the discrete graph inner product.
pub fn project_modes(
    state: &WaveState,
    mesh: &Mesh,
    pairs: &[Eigenpair],
) -> Result<Vec<Vec<f64>>> {
    let m = mesh.arcs.len();
    let mut out = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let mut per_mode = Vec::with_capacity(pair.modes.len());
        for mode in &pair.modes {
            if mode.amps.len() != m {
                return Err(Error::GraphMismatch(format!(
                    "mode covers {} arcs, mesh has {m}",
                    mode.amps.len()
                )));
            }
            let sampled = sample_mode(mode, mesh);
            per_mode.push(discrete_inner(mesh, &state.u, &sampled));
        }
        out.push(per_mode);
    }
    Ok(out)
}

/// Phase-invariant energy content per eigenpair: sum over its modes of
/// (b^2 + k^2 a^2) / 2 with a = <u, V>, b = <u_t, V>. For the k = 0 mode
/// only the kinetic part contributes.
pub fn modal_energies(state: &WaveState, mesh: &Mesh, pairs: &[Eigenpair]) -> Result<Vec<f64>> {
    let dt = mesh.dt;
    let velocity: Vec<f64> = state
        .u
        .iter()
        .zip(&state.u_prev)
        .map(|(a, b)| (a - b) / dt)
        .collect();
    let mut out = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let mut energy = 0.0;
        for mode in &pair.modes {
            let sampled = sample_mode(mode, mesh);
            let a = discrete_inner(mesh, &state.u, &sampled);
            let b = discrete_inner(mesh, &velocity, &sampled);
            energy += 0.5 * (b * b + pair.k * pair.k * a * a);
        }
        out.push(energy);
    }
    Ok(out)
}

// ── Simulation driver ───────────────────────────────────────────────────

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialCondition {
    /// Displacement bump exp(-(x - center)^2 / (2 width^2)) on one edge,
    /// with initial velocity `velocity` times the same profile.
    Gaussian {
        edge: ArcId,
        center: f64,
        width: f64,
        velocity: f64,
    },
    Zero,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "lowercase")]
pub enum BoundarySpec {
    Neumann,
    Radiation(f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub dx: f64,
    pub cfl: f64,
    pub t_end: f64,
    /// Cadence of energy reports and snapshots; non-positive means only the
    /// initial and final states are reported.
    pub snapshot_every: f64,
    pub initial: InitialCondition,
    /// Leaf boundary tags keyed by vertex id; unlisted leaves are Neumann.
    #[serde(default)]
    pub boundaries: BTreeMap<String, BoundarySpec>,
}

/// Field snapshot: per-arc node values (vertex values included at both
/// ends of every arc).
#[derive(Debug, Clone, Serialize)]
pub struct Snapshot {
    pub t: f64,
    pub arcs: Vec<Vec<f64>>,
}

fn snapshot(state: &WaveState, mesh: &Mesh) -> Snapshot {
    let arcs = mesh
        .arcs
        .iter()
        .enumerate()
        .map(|(j, am)| (0..=am.n).map(|i| state.u[mesh.node(j, i)]).collect())
        .collect();
    Snapshot { t: state.t, arcs }
}

#[derive(Debug)]
pub struct SimOutput {
    pub reports: Vec<EnergyReport>,
    pub snapshots: Vec<Snapshot>,
    pub state: WaveState,
    pub mesh: Mesh,
}

/// Runs the wave equation on the graph per the configuration and returns
/// the energy trajectory, snapshots and final state. Deterministic.
pub fn run(graph: &MetricGraph, config: &SimConfig) -> Result<SimOutput> {
    let mesh = discretize(graph, config.dx, config.cfl)?;
    let degrees = graph.degrees();

    let mut boundaries = vec![Boundary::Neumann; mesh.vertex_count];
    for (key, spec) in &config.boundaries {
        let id: i64 = key
            .parse()
            .map_err(|_| Error::InvalidArgs(format!("boundary key {key:?} is not a vertex id")))?;
        let vi = graph
            .vertex_index(id)
            .ok_or_else(|| Error::InvalidArgs(format!("boundary vertex {id} not in graph")))?;
        if degrees[vi] != 1 {
            return Err(Error::InvalidArgs(format!(
                "boundary tags only apply to leaf vertices; vertex {id} has degree {}",
                degrees[vi]
            )));
        }
        boundaries[vi] = match spec {
            BoundarySpec::Neumann => Boundary::Neumann,
            BoundarySpec::Radiation(eps) => {
                if !(*eps > 0.0) {
                    return Err(Error::InvalidArgs(
                        "radiation coefficient must be positive".to_string(),
                    ));
                }
                Boundary::Radiation { epsilon: *eps }
            }
        };
    }

    let mut u0 = vec![0.0; mesh.unknowns];
    let mut v0 = vec![0.0; mesh.unknowns];
    match &config.initial {
        InitialCondition::Zero => {}
        InitialCondition::Gaussian { edge, center, width, velocity } => {
            let j = graph
                .arc_index(*edge)
                .ok_or_else(|| Error::InvalidArgs(format!("initial edge {edge} not in graph")))?;
            if !(*width > 0.0) {
                return Err(Error::InvalidArgs("gaussian width must be positive".to_string()));
            }
            let am = &mesh.arcs[j];
            for i in 0..=am.n {
                let x = mesh.position(j, i);
                let bump = (-(x - center) * (x - center) / (2.0 * width * width)).exp();
                u0[mesh.node(j, i)] = bump;
                v0[mesh.node(j, i)] = velocity * bump;
            }
        }
    }

    let mut state = WaveState::from_initial(&mesh, u0, &v0, boundaries)?;
    let mut reports = vec![edge_energy(&state, &mesh)];
    let mut snapshots = vec![snapshot(&state, &mesh)];

    let total_steps = (config.t_end / mesh.dt).round() as u64;
    let cadence_steps = if config.snapshot_every > 0.0 {
        ((config.snapshot_every / mesh.dt).round() as u64).max(1)
    } else {
        u64::MAX
    };
    for step_index in 1..=total_steps {
        state.step(&mesh);
        if step_index % cadence_steps == 0 || step_index == total_steps {
            reports.push(edge_energy(&state, &mesh));
            snapshots.push(snapshot(&state, &mesh));
        }
    }

    Ok(SimOutput { reports, snapshots, state, mesh })
}
