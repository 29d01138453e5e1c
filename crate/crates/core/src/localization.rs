//! Localization measures for eigenvectors: per-edge L2 mass ratios,
//! length-normalized energy densities, the max-density criterion and the
//! inverse participation ratio.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{ArcId, MetricGraph};
use crate::spectral::{arc_mass, ModeCoefficients};

/// Color bands used for per-edge mass ratios. Boundaries are half-open and
/// assigned upward: e = 0.06 -> Band1, e = 0.12 -> Band2, e = 0.2 -> Band3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Band {
    Band0,
    Band1,
    Band2,
    Band3,
}

impl Band {
    pub fn classify(e: f64) -> Band {
        if e < 0.06 {
            Band::Band0
        } else if e < 0.12 {
            Band::Band1
        } else if e < 0.2 {
            Band::Band2
        } else {
            Band::Band3
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Band::Band0 => "band0",
            Band::Band1 => "band1",
            Band::Band2 => "band2",
            Band::Band3 => "band3",
        }
    }
}

fn edge_masses(mode: &ModeCoefficients, graph: &MetricGraph) -> Result<(Vec<f64>, f64)> {
    if mode.amps.len() != graph.arc_count() {
        return Err(Error::GraphMismatch(format!(
            "mode covers {} arcs, graph has {}",
            mode.amps.len(),
            graph.arc_count()
        )));
    }
    let masses: Vec<f64> = (0..graph.arc_count())
        .map(|j| arc_mass(mode.amps[j], mode.k, graph.arcs[j].length).max(0.0))
        .collect();
    let total: f64 = masses.iter().sum();
    if total.sqrt() < 1e-14 {
        return Err(Error::ZeroMode(total.sqrt()));
    }
    Ok((masses, total))
}

/// Per-edge fractions e(j) of the mode's squared graph norm. Nonnegative,
/// sums to one.
pub fn edge_energy_ratio(mode: &ModeCoefficients, graph: &MetricGraph) -> Result<Vec<f64>> {
    let (masses, total) = edge_masses(mode, graph)?;
    Ok(masses.into_iter().map(|m| m / total).collect())
}

/// Length-normalized energy densities E_j and their maximum, the
/// localization criterion. 1 / criterion estimates the active-arc count.
pub fn localization_criterion(
    mode: &ModeCoefficients,
    graph: &MetricGraph,
) -> Result<(f64, Vec<f64>)> {
    let (masses, _) = edge_masses(mode, graph)?;
    let densities_raw: Vec<f64> = masses
        .iter()
        .zip(&graph.arcs)
        .map(|(m, arc)| m / arc.length)
        .collect();
    let total: f64 = densities_raw.iter().sum();
    let densities: Vec<f64> = densities_raw.into_iter().map(|d| d / total).collect();
    let criterion = densities.iter().cloned().fold(0.0, f64::max);
    Ok((criterion, densities))
}

/// Closed-form integral of (a sin kx + b cos kx)^4 over [0, l], via the
/// amplitude-phase form r sin(kx + phi).
fn quartic_integral(a: f64, b: f64, k: f64, l: f64) -> f64 {
    if k == 0.0 {
        return b.powi(4) * l;
    }
    let r2 = a * a + b * b;
    let phi = b.atan2(a);
    let upper = k * l + phi;
    let anti = |u: f64| 3.0 * u / 8.0 - (2.0 * u).sin() / 4.0 + (4.0 * u).sin() / 32.0;
    r2 * r2 * (anti(upper) - anti(phi)) / k
}

/// Inverse participation ratio: integral of |V|^4 over the squared integral
/// of |V|^2. Invariant under scaling of the mode; its inverse estimates the
/// total active metric length.
pub fn ipr(mode: &ModeCoefficients, graph: &MetricGraph) -> Result<f64> {
    let (_, total) = edge_masses(mode, graph)?;
    let quartic: f64 = graph
        .arcs
        .iter()
        .enumerate()
        .map(|(j, arc)| quartic_integral(mode.amps[j].a, mode.amps[j].b, mode.k, arc.length))
        .sum();
    Ok(quartic / (total * total))
}

/// Band labels for a list of per-edge ratios.
pub fn classify_bands(e: &[f64]) -> Vec<Band> {
    e.iter().map(|&x| Band::classify(x)).collect()
}

/// Full per-mode localization report.
#[derive(Debug, Clone, Serialize)]
pub struct LocalizationReport {
    /// Mode index assigned by the caller (1-based spectral ordering).
    pub q: usize,
    pub k: f64,
    /// Per-edge L2 mass ratios, aligned with `MetricGraph::arcs`.
    pub e: Vec<f64>,
    /// Per-edge length-normalized energy densities.
    pub densities: Vec<f64>,
    /// max_j densities[j].
    pub criterion: f64,
    pub ipr: f64,
    pub bands: Vec<Band>,
    /// Arc ids whose density reaches at least half the criterion.
    pub active_edges: Vec<ArcId>,
    /// One or two dominant edges hold at least half the mass while every
    /// other edge stays below 0.05.
    pub approximately_localized: bool,
}

impl LocalizationReport {
    pub fn new(q: usize, mode: &ModeCoefficients, graph: &MetricGraph) -> Result<Self> {
        let e = edge_energy_ratio(mode, graph)?;
        let (criterion, densities) = localization_criterion(mode, graph)?;
        let ipr_value = ipr(mode, graph)?;
        let bands = classify_bands(&e);
        let active_edges = graph
            .arcs
            .iter()
            .zip(&densities)
            .filter(|(_, &d)| d >= 0.5 * criterion)
            .map(|(arc, _)| arc.id)
            .collect();
        let dominant = e.iter().filter(|&&x| x >= 0.5).count();
        let spill = e.iter().filter(|&&x| x < 0.5 && x >= 0.05).count();
        let approximately_localized = dominant >= 1 && spill == 0;
        Ok(LocalizationReport {
            q,
            k: mode.k,
            e,
            densities,
            criterion,
            ipr: ipr_value,
            bands,
            active_edges,
            approximately_localized,
        })
    }
}
