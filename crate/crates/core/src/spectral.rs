//! Secular-matrix eigensolver for the generalized Laplacian on a metric
//! graph.
//!
//! On each arc the harmonic ansatz V_j(x) = A_j sin kx + B_j cos kx turns
//! the vertex coupling (continuity of the field plus vanishing total
//! outgoing flux) into a homogeneous 2m x 2m system M(k) X = 0 in the
//! stacked coefficients X = (A_1, B_1, ..., A_m, B_m). Resonant frequencies
//! are the k where M(k) is singular; eigenvectors span its null space.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ArcId, End, MetricGraph, VertexId};

/// Per-arc amplitude pair: V(x) = a sin kx + b cos kx.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArcAmplitudes {
    pub a: f64,
    pub b: f64,
}

impl ArcAmplitudes {
    pub const ZERO: ArcAmplitudes = ArcAmplitudes { a: 0.0, b: 0.0 };
}

/// Coefficient vector of one mode: frequency plus per-arc amplitude pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeCoefficients {
    pub k: f64,
    pub amps: Vec<ArcAmplitudes>,
}

impl ModeCoefficients {
    pub fn zero(k: f64, arc_count: usize) -> Self {
        ModeCoefficients { k, amps: vec![ArcAmplitudes::ZERO; arc_count] }
    }

    /// The k = 0 constant mode, normalized on the given graph.
    pub fn constant(graph: &MetricGraph) -> Self {
        let b = 1.0 / graph.total_length().sqrt();
        ModeCoefficients {
            k: 0.0,
            amps: vec![ArcAmplitudes { a: 0.0, b }; graph.arc_count()],
        }
    }

    /// Field value on arc `j` (by index) at arc coordinate `x`.
    pub fn eval(&self, j: usize, x: f64) -> f64 {
        let ArcAmplitudes { a, b } = self.amps[j];
        a * (self.k * x).sin() + b * (self.k * x).cos()
    }

    /// Flattened (A_1, B_1, ..., A_m, B_m) layout.
    pub fn flat(&self) -> Vec<f64> {
        self.amps.iter().flat_map(|p| [p.a, p.b]).collect()
    }

    pub fn from_flat(k: f64, flat: &[f64]) -> Self {
        assert!(flat.len() % 2 == 0, "flat coefficient vector must have even length");
        ModeCoefficients {
            k,
            amps: flat
                .chunks_exact(2)
                .map(|c| ArcAmplitudes { a: c[0], b: c[1] })
                .collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for p in &mut self.amps {
            p.a *= factor;
            p.b *= factor;
        }
    }

    /// Broken-L2 norm over the graph.
    pub fn graph_norm(&self, graph: &MetricGraph) -> Result<f64> {
        Ok(inner_product(self, self, graph)?.max(0.0).sqrt())
    }

    /// Scales the mode to graph norm 1.
    pub fn normalize(&mut self, graph: &MetricGraph) -> Result<()> {
        let norm = self.graph_norm(graph)?;
        if norm < 1e-14 {
            return Err(Error::ZeroMode(norm));
        }
        self.scale(1.0 / norm);
        Ok(())
    }
}

/// What a row of the secular matrix encodes.
#[derive(Debug, Clone, PartialEq)]
pub enum RowKind {
    /// Field value at the reference arc end minus the value at another
    /// incident end.
    Continuity {
        reference: (ArcId, End),
        other: (ArcId, End),
    },
    /// Sum of outgoing derivatives over all incident ends (scaled by 1/k).
    Kirchhoff,
}

#[derive(Debug, Clone)]
pub struct RowInfo {
    pub vertex: VertexId,
    pub kind: RowKind,
}

/// Dense secular matrix M(k) together with a description of its rows.
#[derive(Debug, Clone)]
pub struct SecularMatrix {
    pub k: f64,
    pub entries: DMatrix<f64>,
    pub row_map: Vec<RowInfo>,
}

impl SecularMatrix {
    /// (smallest, largest) singular value.
    pub fn sigma_extremes(&self) -> (f64, f64) {
        let sv = self.entries.clone().svd(false, false).singular_values;
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for &s in sv.iter() {
            lo = lo.min(s);
            hi = hi.max(s);
        }
        (lo, hi)
    }

    /// Euclidean residual norm of M(k) x for a flattened coefficient vector.
    pub fn residual(&self, mode: &ModeCoefficients) -> f64 {
        let x = nalgebra::DVector::from_vec(mode.flat());
        let norm = x.norm();
        if norm == 0.0 {
            return 0.0;
        }
        (&self.entries * x).norm() / norm
    }
}

/// One resonant frequency with an orthonormal basis of its eigenspace.
#[derive(Debug, Clone)]
pub struct Eigenpair {
    pub k: f64,
    pub modes: Vec<ModeCoefficients>,
    pub multiplicity: usize,
    /// Smallest singular value of M(k) at acceptance (0 for the constant
    /// mode and for exactly constructed modes).
    pub residual: f64,
}

/// Assembles M(k): for every vertex of degree d, d - 1 continuity rows
/// against the lowest-indexed incident arc end, then one Kirchhoff row.
/// Derivative rows are scaled by 1/k so that entries stay O(1).
pub fn assemble_secular(graph: &MetricGraph, k: f64) -> Result<SecularMatrix> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::InvalidK(k));
    }
    let m = graph.arc_count();
    let dim = 2 * m;
    let mut entries = DMatrix::<f64>::zeros(dim, dim);
    let mut row_map = Vec::with_capacity(dim);

    // Value coefficients (c_a, c_b) of an arc end.
    let value_coeffs = |arc: usize, end: End| -> (f64, f64) {
        match end {
            End::Origin => (0.0, 1.0),
            End::Terminal => {
                let kl = k * graph.arcs[arc].length;
                (kl.sin(), kl.cos())
            }
        }
    };
    // Outgoing derivative coefficients divided by k.
    let flux_coeffs = |arc: usize, end: End| -> (f64, f64) {
        match end {
            End::Origin => (1.0, 0.0),
            End::Terminal => {
                let kl = k * graph.arcs[arc].length;
                (-kl.cos(), kl.sin())
            }
        }
    };

    let incidence = graph.incidence();
    let mut row = 0;
    for (vi, ends) in incidence.iter().enumerate() {
        let vertex = graph.vertices[vi].id;
        if ends.is_empty() {
            continue;
        }
        let reference = ends[0];
        let (ra, rb) = value_coeffs(reference.arc, reference.end);
        for other in &ends[1..] {
            let (oa, ob) = value_coeffs(other.arc, other.end);
            entries[(row, 2 * reference.arc)] += ra;
            entries[(row, 2 * reference.arc + 1)] += rb;
            entries[(row, 2 * other.arc)] -= oa;
            entries[(row, 2 * other.arc + 1)] -= ob;
            row_map.push(RowInfo {
                vertex,
                kind: RowKind::Continuity {
                    reference: (graph.arcs[reference.arc].id, reference.end),
                    other: (graph.arcs[other.arc].id, other.end),
                },
            });
            row += 1;
        }
        for e in ends {
            let (fa, fb) = flux_coeffs(e.arc, e.end);
            entries[(row, 2 * e.arc)] += fa;
            entries[(row, 2 * e.arc + 1)] += fb;
        }
        row_map.push(RowInfo { vertex, kind: RowKind::Kirchhoff });
        row += 1;
    }
    debug_assert_eq!(row, dim, "vertex conditions must fill all 2m rows");

    Ok(SecularMatrix { k, entries, row_map })
}

/// Closed-form arc integral of (A sin kx + B cos kx)^2 over [0, l]:
///
///   (A^2 + B^2) l/2 + sin(2kl) (B^2 - A^2) / (4k) + AB (1 - cos(2kl)) / (2k)
pub fn edge_norm_closed_form(a: f64, b: f64, k: f64, l: f64) -> Result<f64> {
    if !(k > 0.0) || !(l > 0.0) {
        return Err(Error::InvalidArgs(format!(
            "edge norm needs k > 0 and l > 0, got k = {k}, l = {l}"
        )));
    }
    let two_kl = 2.0 * k * l;
    Ok((a * a + b * b) * l / 2.0
        + two_kl.sin() * (-a * a + b * b) / (4.0 * k)
        + a * b * (1.0 - two_kl.cos()) / (2.0 * k))
}

/// Antiderivative-based integral of the product of two harmonics
/// (a1 sin k1 x + b1 cos k1 x)(a2 sin k2 x + b2 cos k2 x) over [0, l].
/// Handles the zero-frequency and equal-frequency degeneracies analytically.
fn harmonic_product_integral(
    a1: f64,
    b1: f64,
    k1: f64,
    a2: f64,
    b2: f64,
    k2: f64,
    l: f64,
) -> f64 {
    let zero1 = k1 == 0.0;
    let zero2 = k2 == 0.0;
    if zero1 && zero2 {
        return b1 * b2 * l;
    }
    if zero1 {
        // First factor is the constant b1.
        return b1 * (a2 * (1.0 - (k2 * l).cos()) + b2 * (k2 * l).sin()) / k2;
    }
    if zero2 {
        return b2 * (a1 * (1.0 - (k1 * l).cos()) + b1 * (k1 * l).sin()) / k1;
    }
    let diff = k1 - k2;
    if diff.abs() < 1e-12 * k1.abs().max(k2.abs()).max(1.0) {
        // Equal-frequency branch.
        let k = 0.5 * (k1 + k2);
        let two_kl = 2.0 * k * l;
        let int_ss = l / 2.0 - two_kl.sin() / (4.0 * k);
        let int_cc = l / 2.0 + two_kl.sin() / (4.0 * k);
        let int_sc = (1.0 - two_kl.cos()) / (4.0 * k);
        return a1 * a2 * int_ss + b1 * b2 * int_cc + (a1 * b2 + a2 * b1) * int_sc;
    }
    let sum = k1 + k2;
    let sd = (diff * l).sin() / (2.0 * diff);
    let ss = (sum * l).sin() / (2.0 * sum);
    let cd = (1.0 - (diff * l).cos()) / (2.0 * diff);
    let cs = (1.0 - (sum * l).cos()) / (2.0 * sum);
    let int_ss = sd - ss;
    let int_cc = sd + ss;
    // int sin(k1 x) cos(k2 x) and int sin(k2 x) cos(k1 x) differ in the sign
    // of the difference-frequency part.
    let int_s1c2 = cd + cs;
    let int_s2c1 = -cd + cs;
    a1 * a2 * int_ss + b1 * b2 * int_cc + a1 * b2 * int_s1c2 + a2 * b1 * int_s2c1
}

/// Squared L2 mass of one arc's harmonic component; accepts k = 0.
pub fn arc_mass(p: ArcAmplitudes, k: f64, l: f64) -> f64 {
    harmonic_product_integral(p.a, p.b, k, p.a, p.b, k, l)
}

/// Broken-L2 inner product of two coefficient vectors over the same graph.
/// The modes may carry different frequencies.
pub fn inner_product(v: &ModeCoefficients, w: &ModeCoefficients, graph: &MetricGraph) -> Result<f64> {
    let m = graph.arc_count();
    if v.amps.len() != m || w.amps.len() != m {
        return Err(Error::GraphMismatch(format!(
            "coefficient vectors cover {} and {} arcs, graph has {m}",
            v.amps.len(),
            w.amps.len()
        )));
    }
    let mut acc = 0.0;
    for (j, arc) in graph.arcs.iter().enumerate() {
        let p = v.amps[j];
        let q = w.amps[j];
        acc += harmonic_product_integral(p.a, p.b, v.k, q.a, q.b, w.k, arc.length);
    }
    Ok(acc)
}

/// Null-space extraction at a resonant frequency. The basis is drawn from
/// the right singular vectors with singular value below `tol` times the
/// largest singular value, then orthonormalized in the graph inner product.
pub fn extract_modes(graph: &MetricGraph, k_q: f64, tol: f64) -> Result<Eigenpair> {
    let matrix = assemble_secular(graph, k_q)?;
    let svd = matrix.entries.clone().svd(false, true);
    let sv = &svd.singular_values;
    let v_t = svd.v_t.as_ref().expect("svd requested with right vectors");
    let sigma_max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let sigma_min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let threshold = tol * sigma_max;
    if sigma_min >= threshold {
        return Err(Error::NotResonant { k: k_q, sigma_min, threshold });
    }

    let mut raw: Vec<ModeCoefficients> = Vec::new();
    for (i, &s) in sv.iter().enumerate() {
        if s < threshold {
            let row: Vec<f64> = v_t.row(i).iter().cloned().collect();
            raw.push(ModeCoefficients::from_flat(k_q, &row));
        }
    }

    let modes = orthonormalize(raw, graph)?;
    let multiplicity = modes.len();
    Ok(Eigenpair { k: k_q, modes, multiplicity, residual: sigma_min })
}

/// Gram-Schmidt in the graph inner product; drops vectors that become
/// numerically dependent.
pub fn orthonormalize(
    vectors: Vec<ModeCoefficients>,
    graph: &MetricGraph,
) -> Result<Vec<ModeCoefficients>> {
    let mut basis: Vec<ModeCoefficients> = Vec::new();
    for mut v in vectors {
        for _ in 0..2 {
            for b in &basis {
                let proj = inner_product(&v, b, graph)?;
                for (pv, pb) in v.amps.iter_mut().zip(&b.amps) {
                    pv.a -= proj * pb.a;
                    pv.b -= proj * pb.b;
                }
            }
        }
        let norm = v.graph_norm(graph)?;
        if norm > 1e-10 {
            v.scale(1.0 / norm);
            basis.push(v);
        }
    }
    Ok(basis)
}

/// Golden-section minimization of `f` on [a, b] down to interval width `tol`.
fn golden_section_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > tol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    0.5 * (a + b)
}

/// Width to which root brackets are refined.
pub const REFINE_WIDTH: f64 = 1e-12;

/// Default scan resolution: twentyfold oversampling of the root spacing
/// pi / l of the longest arc.
pub fn default_grid_step(graph: &MetricGraph) -> f64 {
    let max_l = graph.arcs.iter().map(|a| a.length).fold(0.0_f64, f64::max);
    std::f64::consts::PI / (20.0 * max_l.max(f64::MIN_POSITIVE))
}

/// Scans [k_min, k_max] for resonant frequencies: evaluates the smallest
/// singular value of M(k) on a grid, refines each local minimum by
/// golden-section search, and accepts roots where it drops below `tol`
/// relative to the largest singular value. When `k_min` is exactly 0 the
/// constant mode of the connected graph is prepended. An empty result means
/// no eigenvalues were found in the range.
pub fn scan_spectrum(
    graph: &MetricGraph,
    k_min: f64,
    k_max: f64,
    grid_step: f64,
    tol: f64,
) -> Result<Vec<Eigenpair>> {
    if !(k_min >= 0.0) || !(k_max > k_min) {
        return Err(Error::InvalidArgs(format!(
            "need 0 <= k_min < k_max, got [{k_min}, {k_max}]"
        )));
    }
    if !(grid_step > 0.0) {
        return Err(Error::InvalidArgs(format!("grid_step must be positive, got {grid_step}")));
    }

    // Grid of evaluation points; k = 0 itself is excluded from assembly.
    let mut ks: Vec<f64> = Vec::new();
    let mut k = if k_min > 0.0 { k_min } else { grid_step };
    while k < k_max + grid_step * 0.5 {
        ks.push(k.min(k_max));
        k += grid_step;
    }
    if ks.len() < 3 {
        return Err(Error::InvalidArgs(
            "scan range must contain at least three grid points".to_string(),
        ));
    }

    let sigma_min_at = |k: f64| -> f64 {
        match assemble_secular(graph, k) {
            Ok(m) => m.sigma_extremes().0,
            Err(_) => f64::INFINITY,
        }
    };

    let sigmas: Vec<f64> = ks.par_iter().map(|&k| sigma_min_at(k)).collect();

    // Interior local minima become refinement brackets.
    let mut brackets: Vec<(f64, f64)> = Vec::new();
    for i in 1..ks.len() - 1 {
        if sigmas[i] <= sigmas[i - 1] && sigmas[i] <= sigmas[i + 1] {
            brackets.push((ks[i - 1], ks[i + 1]));
        }
    }

    let mut found: Vec<Eigenpair> = brackets
        .par_iter()
        .filter_map(|&(a, b)| {
            let k_star = golden_section_min(sigma_min_at, a, b, REFINE_WIDTH);
            match extract_modes(graph, k_star, tol) {
                Ok(pair) => Some(pair),
                Err(_) => None,
            }
        })
        .collect();

    found.sort_by(|p, q| p.k.partial_cmp(&q.k).unwrap());
    // Adjacent brackets can converge to the same root: keep the better one
    // among roots closer than ten refinement widths.
    let mut deduped: Vec<Eigenpair> = Vec::new();
    for pair in found {
        match deduped.last_mut() {
            Some(last) if (pair.k - last.k).abs() < 10.0 * REFINE_WIDTH => {
                if pair.residual < last.residual {
                    *last = pair;
                }
            }
            _ => deduped.push(pair),
        }
    }

    if k_min == 0.0 {
        let constant = Eigenpair {
            k: 0.0,
            modes: vec![ModeCoefficients::constant(graph)],
            multiplicity: 1,
            residual: 0.0,
        };
        deduped.insert(0, constant);
    }
    Ok(deduped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    /// Composite-trapezoid quadrature used as an independent oracle.
    fn trapezoid<F: Fn(f64) -> f64>(f: F, l: f64, panels: usize) -> f64 {
        let h = l / panels as f64;
        let mut acc = 0.5 * (f(0.0) + f(l));
        for i in 1..panels {
            acc += f(i as f64 * h);
        }
        acc * h
    }

    #[test]
    fn single_arc_matrix_matches_neumann_interval() {
        let g = graph::MetricGraph::single_arc(PI);
        let m = assemble_secular(&g, 1.0).unwrap();
        assert_eq!(m.entries.nrows(), 2);
        // Rows [1, 0] (flux at x = 0) and [-cos(pi), sin(pi)] = [1, 0].
        assert_relative_eq!(m.entries[(0, 0)], 1.0);
        assert_relative_eq!(m.entries[(0, 1)], 0.0);
        assert_relative_eq!(m.entries[(1, 0)], 1.0, epsilon = 1e-15);
        assert!(m.entries[(1, 1)].abs() < 1e-15);
        let (lo, _) = m.sigma_extremes();
        assert!(lo < 1e-12, "matrix must be singular at k = 1, sigma_min = {lo}");
    }

    #[test]
    fn matrix_dimension_is_twice_arc_count() {
        let g = graph::g14();
        let m = assemble_secular(&g, 0.37).unwrap();
        assert_eq!(m.entries.nrows(), 28);
        assert_eq!(m.entries.ncols(), 28);
        assert_eq!(m.row_map.len(), 28);
    }

    #[test]
    fn invalid_k_rejected() {
        let g = graph::MetricGraph::single_arc(1.0);
        assert!(matches!(assemble_secular(&g, 0.0), Err(Error::InvalidK(_))));
        assert!(matches!(assemble_secular(&g, -2.0), Err(Error::InvalidK(_))));
    }

    #[test]
    fn neumann_interval_spectrum() {
        let g = graph::MetricGraph::single_arc(PI);
        let pairs = scan_spectrum(&g, 0.5, 3.5, 0.02, 1e-8).unwrap();
        let ks: Vec<f64> = pairs.iter().map(|p| p.k).collect();
        assert_eq!(ks.len(), 3, "expected k = 1, 2, 3; got {ks:?}");
        for (found, expect) in ks.iter().zip([1.0, 2.0, 3.0]) {
            assert!((found - expect).abs() < 1e-9, "k = {found} vs {expect}");
        }
    }

    #[test]
    fn neumann_interval_mode_is_cosine() {
        let g = graph::MetricGraph::single_arc(PI);
        let pair = extract_modes(&g, 1.0, 1e-8).unwrap();
        assert_eq!(pair.multiplicity, 1);
        let mode = &pair.modes[0];
        // cos x with graph norm 1 on [0, pi]: amplitude sqrt(2/pi).
        assert!(mode.amps[0].a.abs() < 1e-10);
        assert_relative_eq!(mode.amps[0].b.abs(), (2.0 / PI).sqrt(), epsilon = 1e-10);
    }

    #[test]
    fn not_resonant_off_spectrum() {
        let g = graph::MetricGraph::single_arc(PI);
        assert!(matches!(
            extract_modes(&g, 1.5, 1e-8),
            Err(Error::NotResonant { .. })
        ));
    }

    #[test]
    fn edge_norm_examples() {
        assert_relative_eq!(
            edge_norm_closed_form(1.0, 0.0, 1.0, PI).unwrap(),
            PI / 2.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            edge_norm_closed_form(0.0, 1.0, 1.0, 2.0 * PI).unwrap(),
            PI,
            epsilon = 1e-12
        );
    }

    #[test]
    fn edge_norm_matches_quadrature() {
        let (a, b, k, l) = (0.3, -0.7, 1.1, 2.4);
        let exact = edge_norm_closed_form(a, b, k, l).unwrap();
        let quad = trapezoid(|x| (a * (k * x).sin() + b * (k * x).cos()).powi(2), l, 1_000_000);
        assert!((exact - quad).abs() < 1e-8, "closed form {exact} vs quadrature {quad}");
    }

    #[test]
    fn edge_norm_rejects_bad_args() {
        assert!(edge_norm_closed_form(1.0, 0.0, 0.0, 1.0).is_err());
        assert!(edge_norm_closed_form(1.0, 0.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn inner_product_consistent_with_edge_norm() {
        let g = graph::g14();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let k = 0.9;
        let amps: Vec<ArcAmplitudes> = (0..g.arc_count())
            .map(|_| ArcAmplitudes {
                a: rng.random_range(-1.0..1.0),
                b: rng.random_range(-1.0..1.0),
            })
            .collect();
        let v = ModeCoefficients { k, amps };
        let ip = inner_product(&v, &v, &g).unwrap();
        let by_edges: f64 = g
            .arcs
            .iter()
            .enumerate()
            .map(|(j, arc)| {
                edge_norm_closed_form(v.amps[j].a, v.amps[j].b, k, arc.length).unwrap()
            })
            .sum();
        assert_relative_eq!(ip, by_edges, epsilon = 1e-12);
    }

    #[test]
    fn inner_product_cross_frequency_orthogonality() {
        // Interval eigenmodes cos(x) and cos(2x) on [0, pi] are orthogonal.
        let g = graph::MetricGraph::single_arc(PI);
        let v = ModeCoefficients { k: 1.0, amps: vec![ArcAmplitudes { a: 0.0, b: 1.0 }] };
        let w = ModeCoefficients { k: 2.0, amps: vec![ArcAmplitudes { a: 0.0, b: 1.0 }] };
        assert!(inner_product(&v, &w, &g).unwrap().abs() < 1e-12);
    }

    #[test]
    fn inner_product_matches_quadrature_mixed_frequencies() {
        let g = graph::g14();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (k1, k2) = (0.8, 1.3);
        let make = |k: f64, rng: &mut ChaCha8Rng| ModeCoefficients {
            k,
            amps: (0..g.arc_count())
                .map(|_| ArcAmplitudes {
                    a: rng.random_range(-1.0..1.0),
                    b: rng.random_range(-1.0..1.0),
                })
                .collect(),
        };
        let v = make(k1, &mut rng);
        let w = make(k2, &mut rng);
        let exact = inner_product(&v, &w, &g).unwrap();
        let quad: f64 = g
            .arcs
            .iter()
            .enumerate()
            .map(|(j, arc)| {
                trapezoid(|x| v.eval(j, x) * w.eval(j, x), arc.length, 20_000)
            })
            .sum();
        assert!((exact - quad).abs() < 1e-8, "exact {exact} vs quadrature {quad}");
        // Symmetry.
        let flipped = inner_product(&w, &v, &g).unwrap();
        assert_relative_eq!(exact, flipped, epsilon = 1e-14);
    }

    #[test]
    fn inner_product_zero_frequency_branch() {
        let g = graph::MetricGraph::single_arc(2.0);
        let c = ModeCoefficients::constant(&g);
        // Norm of the normalized constant mode is 1.
        assert_relative_eq!(inner_product(&c, &c, &g).unwrap(), 1.0, epsilon = 1e-14);
        let w = ModeCoefficients { k: 1.5, amps: vec![ArcAmplitudes { a: 0.4, b: -0.2 }] };
        let exact = inner_product(&c, &w, &g).unwrap();
        let quad = trapezoid(|x| c.eval(0, x) * w.eval(0, x), 2.0, 200_000);
        assert!((exact - quad).abs() < 1e-9);
    }

    #[test]
    fn graph_mismatch_detected() {
        let g = graph::MetricGraph::single_arc(1.0);
        let v = ModeCoefficients::zero(1.0, 1);
        let w = ModeCoefficients::zero(1.0, 3);
        assert!(matches!(inner_product(&v, &w, &g), Err(Error::GraphMismatch(_))));
    }

    #[test]
    fn sigma_min_is_continuous_on_grid() {
        // Lipschitz-style sanity check: neighboring grid values stay close.
        let g = graph::g14();
        let step = 0.005;
        let sig: Vec<f64> = (1..200)
            .map(|i| assemble_secular(&g, i as f64 * step).unwrap().sigma_extremes().0)
            .collect();
        let max_jump = sig.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
        // Empirical bound: jumps scale with step times the total length.
        assert!(
            max_jump < 60.0 * step,
            "sigma_min jumped by {max_jump} across one grid step"
        );
    }

    #[test]
    fn k_zero_constant_mode_prepended() {
        let g = graph::MetricGraph::single_arc(PI);
        let pairs = scan_spectrum(&g, 0.0, 1.5, 0.02, 1e-8).unwrap();
        assert_eq!(pairs[0].k, 0.0);
        assert_relative_eq!(
            pairs[0].modes[0].graph_norm(&g).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert!((pairs[1].k - 1.0).abs() < 1e-9);
    }

    #[test]
    fn extracted_modes_have_small_residual_and_unit_norm() {
        let g = graph::g14();
        let pairs = scan_spectrum(&g, 0.1, 0.9, default_grid_step(&g), 1e-8).unwrap();
        assert!(!pairs.is_empty());
        for pair in &pairs {
            let m = assemble_secular(&g, pair.k).unwrap();
            for mode in &pair.modes {
                assert!(m.residual(mode) < 1e-6, "residual too large at k = {}", pair.k);
                assert_relative_eq!(mode.graph_norm(&g).unwrap(), 1.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn random_edge_norms_match_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..60 {
            let a = rng.random_range(-1.0..1.0);
            let b = rng.random_range(-1.0..1.0);
            let k = rng.random_range(0.1..10.0);
            let l = rng.random_range(0.1..20.0);
            let exact = edge_norm_closed_form(a, b, k, l).unwrap();
            let quad = trapezoid(|x| (a * (k * x).sin() + b * (k * x).cos()).powi(2), l, 200_000);
            let scale = exact.abs().max(1.0);
            assert!(
                (exact - quad).abs() / scale < 1e-8,
                "mismatch for a={a} b={b} k={k} l={l}"
            );
        }
    }
}
