//! Spectra, localized modes and wave dynamics on metric graphs.
//!
//! A metric graph carries the one-dimensional Laplacian on every arc,
//! coupled at the vertices by continuity and the Kirchhoff flux condition.
//! This crate computes the resulting Helmholtz spectrum through the secular
//! matrix M(k), measures how concentrated each eigenvector is, constructs
//! exactly localized eigenvectors from integer resonance conditions, and
//! integrates the time-dependent wave equation on the graph with Neumann or
//! radiating leaves.

pub mod buffon;
pub mod error;
pub mod graph;
pub mod localization;
pub mod resonance;
pub mod spectral;
pub mod wave;

pub use buffon::{generate_buffon, BuffonConfig, LengthLaw};
pub use error::{Error, Result};
pub use graph::{g14, Arc, End, MetricGraph, ValidationReport, Vertex};
pub use localization::{
    classify_bands, edge_energy_ratio, ipr, localization_criterion, Band, LocalizationReport,
};
pub use resonance::{
    certify_nonexistence, check_cycle, check_leaves, check_pumpkin, check_shape, construct_mode,
    join_composite, tune_lengths, ForbiddenShape, NonexistenceCertificate, ResonanceSpec,
    ShapeKind,
};
pub use spectral::{
    assemble_secular, default_grid_step, edge_norm_closed_form, extract_modes, inner_product,
    scan_spectrum, ArcAmplitudes, Eigenpair, ModeCoefficients, SecularMatrix,
};
pub use wave::{
    discretize, edge_energy, modal_energies, project_modes, run, sample_mode, Boundary,
    BoundarySpec, EnergyReport, InitialCondition, Mesh, SimConfig, SimOutput, Snapshot, WaveState,
};
