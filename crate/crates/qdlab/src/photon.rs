//! Blackbody-photon environment on a discretized sky: equal-area sphere
//! partitions, Planck-weighted momentum quadrature, elastic recoilless
//! scattering kernels, and the per-photon decoherence and redundancy rates
//! they induce.
//!
//! Directions are unit vectors, angles radians, solid angles steradians, and
//! temperature is in energy units (k_B = 1, and momenta share the energy
//! scale, c = 1).

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::chernoff::{self, ChernoffError};
use crate::linalg::{
    adjoint, frobenius_norm, hermitian_spectrum, identity, matmul, ComplexMatrix, DensityMatrix,
    LinalgError, Spectrum, DEFAULT_TOLERANCES,
};
use crate::threads;

/// Momentum quadrature nodes used when a caller does not choose a count.
pub const DEFAULT_MOMENTUM_NODES: usize = 32;

/// Angular width of the built-in forward-peaked kernel (1 − n̂·n̂′ scale).
pub const DEFAULT_KERNEL_WIDTH: f64 = 0.1;

/// Phase strength of the built-in kernel at the mean thermal momentum.
pub const DEFAULT_KERNEL_STRENGTH: f64 = 0.5;

/* Per-photon decoherence increments at or below this are treated as "no
 * decoherence": the associated time scale is reported as infinite. The
 * threshold sits above eigendecomposition rounding so an identity-like
 * kernel is recognized as one. */
const NO_DECOHERENCE_EPS: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum PhotonError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Chernoff(Box<ChernoffError>),
    #[error("resolution {0} yields fewer than 12 cells")]
    ResolutionTooSmall(usize),
    #[error("cap half-angle must lie in (0, π), got {0}")]
    BadCapAngle(f64),
    #[error("patch contains no cells at this resolution; increase the resolution")]
    DegeneratePatch,
    #[error("temperature must be positive and finite, got {0}")]
    BadTemperature(f64),
    #[error("momentum quadrature needs at least 2 nodes, got {0}")]
    BadNodeCount(usize),
    #[error("kernel width must be positive and finite, got {0}")]
    BadKernelWidth(f64),
    #[error("kernel strength must be finite, got {0}")]
    BadKernelStrength(f64),
    #[error("kernel family supplies {kernel} nodes, the spectrum has {spectrum}")]
    NodeCountMismatch { kernel: usize, spectrum: usize },
    #[error("kernel matrix is {got}x{got}, the partition has {expected} cells")]
    KernelShape { expected: usize, got: usize },
    #[error(
        "scattering matrix for position {position}, node {node} deviates from \
         unitarity by {deviation:.3e}"
    )]
    KernelNotUnitary { position: usize, node: usize, deviation: f64 },
    #[error("kernel file, line {line}: {reason}")]
    KernelFile { line: usize, reason: String },
    #[error("momentum node index {node} out of range for {count} nodes")]
    NodeOutOfRange { node: usize, count: usize },
    #[error("photon rate must be positive and finite, got {0}")]
    BadPhotonRate(f64),
    #[error("delta must lie strictly between 0 and 1, got {0}")]
    DeltaOutOfRange(f64),
    #[error("decoherence time must be positive, got {0}")]
    BadDecoherenceTime(f64),
    #[error(
        "receptivity is undefined: the scattering leaves no trace to apportion \
         (identity kernel or coincident positions)"
    )]
    UndefinedReceptivity,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<ChernoffError> for PhotonError {
    fn from(e: ChernoffError) -> Self {
        match e {
            ChernoffError::Linalg(inner) => PhotonError::Linalg(inner),
            other => PhotonError::Chernoff(Box::new(other)),
        }
    }
}

/// Which part of the sky the observed fragment 𝔹 covers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SkyPatch {
    FullSphere,
    /// Spherical cap of the given half-angle about the +z axis.
    Cap { half_angle: f64 },
}

/// Equal-solid-angle partition of the sphere with a membership flag per cell.
///
/// Every cell has exactly the same solid angle 4π/♯cells, so the patch area
/// is the cell area times the member count by construction.
#[derive(Debug, Clone)]
pub struct SkyPartition {
    directions: Vec<[f64; 3]>,
    membership: Vec<bool>,
    cell_area: f64,
    patch_cells: usize,
}

impl SkyPartition {
    pub fn cell_count(&self) -> usize {
        self.directions.len()
    }

    pub fn cell_area(&self) -> f64 {
        self.cell_area
    }

    pub fn directions(&self) -> &[[f64; 3]] {
        &self.directions
    }

    pub fn membership(&self) -> &[bool] {
        &self.membership
    }

    pub fn is_member(&self, cell: usize) -> bool {
        self.membership[cell]
    }

    pub fn patch_cell_count(&self) -> usize {
        self.patch_cells
    }

    /// A_𝔹 = ΔA · (member count).
    pub fn patch_area(&self) -> f64 {
        self.cell_area * self.patch_cells as f64
    }

    pub fn total_area(&self) -> f64 {
        self.cell_area * self.directions.len() as f64
    }
}

/* One iso-latitude band: cells in [z_lo, z_hi] at the band's area midpoint. */
fn push_band_cells(directions: &mut Vec<[f64; 3]>, z_hi: f64, z_lo: f64, cells: usize) {
    let z = 0.5 * (z_hi + z_lo);
    let radius = (1.0 - z * z).max(0.0).sqrt();
    for i in 0..cells {
        let phi = 2.0 * PI * (i as f64 + 0.5) / cells as f64;
        directions.push([radius * phi.cos(), radius * phi.sin(), z]);
    }
}

/* Split `cells` cells across iso-latitude bands spanning z ∈ [z_top,
 * z_top − 2·cells/total): band count keeps cells roughly square, per-band
 * counts follow the equal-colatitude area shares by largest remainder, and
 * the final z-edges are recomputed so every cell has exactly 4π/total
 * steradians. */
fn build_region(directions: &mut Vec<[f64; 3]>, z_top: f64, cells: usize, total: usize) {
    if cells == 0 {
        return;
    }
    let z_bottom = z_top - 2.0 * cells as f64 / total as f64;
    let theta_top = z_top.clamp(-1.0, 1.0).acos();
    let theta_bottom = z_bottom.clamp(-1.0, 1.0).acos();
    let span = theta_bottom - theta_top;
    let cell_width = (4.0 * PI / total as f64).sqrt();
    let bands = ((span / cell_width).round() as usize).clamp(1, cells);

    /* Ideal share of each equal-colatitude band, then largest remainder. */
    let mut counts = vec![0usize; bands];
    let mut remainders: Vec<(f64, usize)> = Vec::with_capacity(bands);
    let mut assigned = 0usize;
    let z_span = z_top - z_bottom;
    for (b, count) in counts.iter_mut().enumerate() {
        let th_hi = theta_top + span * b as f64 / bands as f64;
        let th_lo = theta_top + span * (b + 1) as f64 / bands as f64;
        let ideal = cells as f64 * (th_hi.cos() - th_lo.cos()) / z_span;
        *count = ideal.floor() as usize;
        assigned += *count;
        remainders.push((ideal - ideal.floor(), b));
    }
    remainders.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    for &(_, b) in remainders.iter().cycle().take(cells - assigned) {
        counts[b] += 1;
    }

    let mut z_hi = z_top;
    for &count in &counts {
        if count == 0 {
            continue;
        }
        let z_lo = z_hi - 2.0 * count as f64 / total as f64;
        push_band_cells(directions, z_hi, z_lo, count);
        z_hi = z_lo;
    }
}

/// Equal-area sky partition with `resolution` cells and patch membership by
/// cell-center inclusion.
///
/// For a cap patch the band layout is split at the cap boundary (rounded to
/// a whole number of cells), so the member count equals the rounded cap
/// area and no cell straddles the boundary.
pub fn build_sky_partition(
    resolution: usize,
    patch: SkyPatch,
) -> Result<SkyPartition, PhotonError> {
    if resolution < 12 {
        return Err(PhotonError::ResolutionTooSmall(resolution));
    }
    let n = resolution;
    let cell_area = 4.0 * PI / n as f64;
    let mut directions = Vec::with_capacity(n);
    let cap_cos = match patch {
        SkyPatch::FullSphere => {
            build_region(&mut directions, 1.0, n, n);
            None
        }
        SkyPatch::Cap { half_angle } => {
            if !(half_angle > 0.0 && half_angle < PI) || !half_angle.is_finite() {
                return Err(PhotonError::BadCapAngle(half_angle));
            }
            let fraction = 0.5 * (1.0 - half_angle.cos());
            let cap_cells = (n as f64 * fraction).round() as usize;
            if cap_cells == 0 {
                return Err(PhotonError::DegeneratePatch);
            }
            build_region(&mut directions, 1.0, cap_cells, n);
            build_region(
                &mut directions,
                1.0 - 2.0 * cap_cells as f64 / n as f64,
                n - cap_cells,
                n,
            );
            Some(half_angle.cos())
        }
    };
    debug_assert_eq!(directions.len(), n);
    let membership: Vec<bool> = match cap_cos {
        None => vec![true; n],
        Some(c) => directions.iter().map(|d| d[2] >= c).collect(),
    };
    let patch_cells = membership.iter().filter(|&&m| m).count();
    if patch_cells == 0 {
        return Err(PhotonError::DegeneratePatch);
    }
    Ok(SkyPartition {
        directions,
        membership,
        cell_area,
        patch_cells,
    })
}

/* Gauss-Legendre nodes and weights on [−1, 1] by Newton iteration on the
 * Legendre recurrence; symmetric pairs are filled together. */
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut derivative = 0.0;
        for _ in 0..100 {
            let mut p_prev = 1.0;
            let mut p = x;
            for k in 2..=n {
                let p_next =
                    ((2 * k - 1) as f64 * x * p - (k - 1) as f64 * p_prev) / k as f64;
                p_prev = p;
                p = p_next;
            }
            derivative = n as f64 * (x * p - p_prev) / (x * x - 1.0);
            let step = p / derivative;
            x -= step;
            if step.abs() <= 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * derivative * derivative);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Thermal momentum distribution P(p) ∝ p²/(e^{p/T} − 1), discretized on
/// Gauss-Legendre nodes mapped to (0, ∞) via u = p/(p + 2T) and normalized
/// to Σ w_j = 1.
#[derive(Debug, Clone, Serialize)]
pub struct BlackbodySpectrum {
    temperature: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl BlackbodySpectrum {
    pub fn new(temperature: f64) -> Result<Self, PhotonError> {
        BlackbodySpectrum::with_node_count(temperature, DEFAULT_MOMENTUM_NODES)
    }

    pub fn with_node_count(temperature: f64, count: usize) -> Result<Self, PhotonError> {
        if temperature <= 0.0 || !temperature.is_finite() {
            return Err(PhotonError::BadTemperature(temperature));
        }
        if count < 2 {
            return Err(PhotonError::BadNodeCount(count));
        }
        let (gl_nodes, gl_weights) = gauss_legendre(count);
        let mut nodes = Vec::with_capacity(count);
        let mut weights = Vec::with_capacity(count);
        for (&x, &gw) in gl_nodes.iter().zip(&gl_weights) {
            let u = 0.5 * (x + 1.0);
            let p = 2.0 * temperature * u / (1.0 - u);
            /* P(p) in the overflow-safe form p² e^{−p/T}/(1 − e^{−p/T}),
             * folded with the Jacobian dp/du = 2T/(1−u)² and du = dx/2. */
            let boltzmann = (-p / temperature).exp();
            let planck = p * p * boltzmann / (1.0 - boltzmann);
            let jacobian = 2.0 * temperature / ((1.0 - u) * (1.0 - u));
            nodes.push(p);
            weights.push(gw * 0.5 * planck * jacobian);
        }
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        Ok(BlackbodySpectrum {
            temperature,
            nodes,
            weights,
        })
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// ⟨p⟩ under the discretized distribution (≈ 2.701·T for Planck).
    pub fn mean_momentum(&self) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| p * w)
            .sum()
    }
}

/// How the per-momentum scattering unitaries are supplied.
#[derive(Debug, Clone)]
pub enum KernelSpec {
    /// S_x^p = I: photons pass through unchanged.
    Identity,
    /// Forward-peaked phase kernel S_x^p = Φ_x^p exp(−i ε(p) K°) Φ_x^p† with
    /// K°_ij = exp(−(1 − n̂_i·n̂_j)/width), ε(p) = strength·p/⟨p⟩, and
    /// Φ_x^p = diag(e^{i p n̂_i·x}) carrying the position dependence.
    SmallAngle { width: f64, strength: f64 },
    /// Explicit per-node unitaries, one family per scatterer position.
    Explicit {
        x1: Vec<ComplexMatrix>,
        x2: Vec<ComplexMatrix>,
    },
}

impl KernelSpec {
    pub fn small_angle_default() -> Self {
        KernelSpec::SmallAngle {
            width: DEFAULT_KERNEL_WIDTH,
            strength: DEFAULT_KERNEL_STRENGTH,
        }
    }
}

/// Scatterer position selector for per-node operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scatterer {
    X1,
    X2,
}

#[derive(Debug)]
enum KernelOperators {
    Identity,
    SmallAngle {
        coupling: Spectrum,
        /// ε(p_j) per momentum node.
        phase_strengths: Vec<f64>,
    },
    Explicit {
        x1: Vec<ComplexMatrix>,
        x2: Vec<ComplexMatrix>,
    },
}

/// Immutable photon-environment model: sky partition, momentum spectrum,
/// scattering kernel family, and the two candidate scatterer positions.
#[derive(Debug)]
pub struct SkyModel {
    partition: SkyPartition,
    spectrum: BlackbodySpectrum,
    x1: [f64; 3],
    x2: [f64; 3],
    kernel: KernelOperators,
}

fn unitarity_deviation(s: &ComplexMatrix) -> f64 {
    let product = matmul(&adjoint(s), s);
    let dim = s.nrows();
    frobenius_norm(&(&product - &identity(dim)))
}

fn validate_family(
    family: &[ComplexMatrix],
    position: usize,
    cells: usize,
    nodes: usize,
) -> Result<(), PhotonError> {
    if family.len() != nodes {
        return Err(PhotonError::NodeCountMismatch {
            kernel: family.len(),
            spectrum: nodes,
        });
    }
    for (j, s) in family.iter().enumerate() {
        if s.nrows() != cells || s.ncols() != cells {
            return Err(PhotonError::KernelShape {
                expected: cells,
                got: s.nrows().max(s.ncols()),
            });
        }
        let deviation = unitarity_deviation(s);
        if deviation > 1e-10 * (cells as f64).sqrt().max(1.0) {
            return Err(PhotonError::KernelNotUnitary {
                position,
                node: j,
                deviation,
            });
        }
    }
    Ok(())
}

/// Assemble a [`SkyModel`], building the kernel operators once: the built-in
/// kernel eigendecomposes its direction-coupling matrix a single time and
/// reuses it for every momentum node and position.
pub fn sky_model(
    partition: SkyPartition,
    spectrum: BlackbodySpectrum,
    kernel: KernelSpec,
    x1: [f64; 3],
    x2: [f64; 3],
) -> Result<SkyModel, PhotonError> {
    let cells = partition.cell_count();
    let operators = match kernel {
        KernelSpec::Identity => KernelOperators::Identity,
        KernelSpec::SmallAngle { width, strength } => {
            if width <= 0.0 || !width.is_finite() {
                return Err(PhotonError::BadKernelWidth(width));
            }
            if !strength.is_finite() {
                return Err(PhotonError::BadKernelStrength(strength));
            }
            let mut coupling = ComplexMatrix::zeros((cells, cells));
            let dirs = partition.directions();
            for i in 0..cells {
                for j in 0..cells {
                    let dot = dirs[i][0] * dirs[j][0]
                        + dirs[i][1] * dirs[j][1]
                        + dirs[i][2] * dirs[j][2];
                    coupling[(i, j)] = C64::new((-(1.0 - dot) / width).exp(), 0.0);
                }
            }
            let coupling = hermitian_spectrum(&coupling, &DEFAULT_TOLERANCES)?;
            let mean_p = spectrum.mean_momentum();
            let phase_strengths = spectrum
                .nodes()
                .iter()
                .map(|p| strength * p / mean_p)
                .collect();
            KernelOperators::SmallAngle {
                coupling,
                phase_strengths,
            }
        }
        KernelSpec::Explicit { x1, x2 } => {
            validate_family(&x1, 1, cells, spectrum.node_count())?;
            validate_family(&x2, 2, cells, spectrum.node_count())?;
            KernelOperators::Explicit { x1, x2 }
        }
    };
    Ok(SkyModel {
        partition,
        spectrum,
        x1,
        x2,
        kernel: operators,
    })
}

impl SkyModel {
    pub fn partition(&self) -> &SkyPartition {
        &self.partition
    }

    pub fn spectrum(&self) -> &BlackbodySpectrum {
        &self.spectrum
    }

    pub fn positions(&self) -> ([f64; 3], [f64; 3]) {
        (self.x1, self.x2)
    }

    fn check_node(&self, node: usize) -> Result<(), PhotonError> {
        let count = self.spectrum.node_count();
        if node >= count {
            return Err(PhotonError::NodeOutOfRange { node, count });
        }
        Ok(())
    }

    /// The unitary S_x^p for one scatterer position and momentum node.
    pub fn scattering_matrix(
        &self,
        which: Scatterer,
        node: usize,
    ) -> Result<ComplexMatrix, PhotonError> {
        self.check_node(node)?;
        let cells = self.partition.cell_count();
        let x = match which {
            Scatterer::X1 => self.x1,
            Scatterer::X2 => self.x2,
        };
        Ok(match &self.kernel {
            KernelOperators::Identity => identity(cells),
            KernelOperators::SmallAngle {
                coupling,
                phase_strengths,
            } => {
                let eps = phase_strengths[node];
                let mut s = coupling.apply_complex(|lambda| C64::from_polar(1.0, -eps * lambda));
                let p = self.spectrum.nodes()[node];
                let phases: Vec<C64> = self
                    .partition
                    .directions()
                    .iter()
                    .map(|d| C64::from_polar(1.0, p * (d[0] * x[0] + d[1] * x[1] + d[2] * x[2])))
                    .collect();
                for ((i, j), value) in s.indexed_iter_mut() {
                    *value *= phases[i] * phases[j].conj();
                }
                s
            }
            KernelOperators::Explicit { x1, x2 } => match which {
                Scatterer::X1 => x1[node].clone(),
                Scatterer::X2 => x2[node].clone(),
            },
        })
    }
}

/// Q_{p|x} = S_x^p Q S_x^p† with Q the 𝔹-membership projector: the support
/// of the scattered patch modes at one momentum. Idempotent and of trace
/// ♯𝔹 up to rounding, by unitarity.
pub fn photon_conditional_projector(
    model: &SkyModel,
    which: Scatterer,
    node: usize,
) -> Result<ComplexMatrix, PhotonError> {
    let s = model.scattering_matrix(which, node)?;
    let cells = model.partition.cell_count();
    /* S Q S† = (S Q)(S Q)† with Q diagonal 0/1: scale columns, one matmul. */
    let mut sq = s;
    for ((_, j), value) in sq.indexed_iter_mut() {
        if !model.partition.is_member(j) {
            *value = C64::new(0.0, 0.0);
        }
    }
    debug_assert_eq!(sq.nrows(), cells);
    Ok(matmul(&sq, &adjoint(&sq)))
}

/* Everything each momentum node contributes, gathered in a single pass over
 * U = S_{x₁}^†S_{x₂}: the patch-block overlap, the patch diagonal of U, and
 * the T = U − I magnitude sums split by column membership. */
struct NodeSums {
    overlap: f64,
    diag_re: f64,
    cross_block: f64,
    row_total: f64,
}

fn node_sums(model: &SkyModel, node: usize) -> Result<NodeSums, PhotonError> {
    let s1 = model.scattering_matrix(Scatterer::X1, node)?;
    let s2 = model.scattering_matrix(Scatterer::X2, node)?;
    let u = matmul(&adjoint(&s1), &s2);
    let member = model.partition.membership();
    let n_b = model.partition.patch_cell_count() as f64;
    let mut overlap = 0.0;
    let mut diag_re = 0.0;
    let mut cross_block = 0.0;
    let mut in_block = 0.0;
    for (row, &row_member) in member.iter().enumerate() {
        if !row_member {
            continue;
        }
        diag_re += u[(row, row)].re;
        for (col, &col_member) in member.iter().enumerate() {
            let u_entry = u[(row, col)];
            let t_entry = if row == col {
                u_entry - C64::new(1.0, 0.0)
            } else {
                u_entry
            };
            let t_sq = t_entry.norm_sqr();
            if col_member {
                overlap += u_entry.norm_sqr();
                in_block += t_sq;
            } else {
                cross_block += t_sq;
            }
        }
    }
    Ok(NodeSums {
        overlap: overlap / n_b,
        diag_re,
        cross_block,
        row_total: in_block + cross_block,
    })
}

fn all_node_sums(model: &SkyModel) -> Result<Vec<NodeSums>, PhotonError> {
    threads::install(|| {
        (0..model.spectrum.node_count())
            .into_par_iter()
            .map(|j| node_sums(model, j))
            .collect::<Result<Vec<_>, _>>()
    })
}

fn weighted<F: Fn(&NodeSums) -> f64>(model: &SkyModel, sums: &[NodeSums], f: F) -> f64 {
    model
        .spectrum
        .weights()
        .iter()
        .zip(sums)
        .map(|(w, s)| w * f(s))
        .sum()
}

/// Spectrum-averaged per-photon record overlap
/// Σ_j w_j tr[Q_{p_j|x₁} Q_{p_j|x₂}] / tr Q, normalized so coincident
/// positions give exactly 1. Because the conditional states are projectors,
/// this equals their Chernoff overlap at every exponent.
pub fn photon_chernoff_overlap(model: &SkyModel) -> Result<f64, PhotonError> {
    let sums = all_node_sums(model)?;
    Ok(weighted(model, &sums, |s| s.overlap))
}

/// Largest deviation between [`photon_chernoff_overlap`] and the dense
/// Chernoff overlap of the normalized conditional projectors across the
/// given exponents: a cross-check that the projector shortcut and the
/// general fractional-power route agree.
pub fn projector_overlap_deviation(
    model: &SkyModel,
    c_values: &[f64],
) -> Result<f64, PhotonError> {
    let fast = photon_chernoff_overlap(model)?;
    let n_b = model.partition.patch_cell_count() as f64;
    let scale = C64::new(1.0 / n_b, 0.0);
    let mut worst: f64 = 0.0;
    for &c in c_values {
        let mut dense = 0.0;
        for (j, &w) in model.spectrum.weights().iter().enumerate() {
            let q1 = photon_conditional_projector(model, Scatterer::X1, j)?;
            let q2 = photon_conditional_projector(model, Scatterer::X2, j)?;
            let rho1 = DensityMatrix::new(q1.mapv(|z| z * scale))?;
            let rho2 = DensityMatrix::new(q2.mapv(|z| z * scale))?;
            dense += w * chernoff::chernoff_overlap(&rho1, &rho2, c)?;
        }
        worst = worst.max((dense - fast).abs());
    }
    Ok(worst)
}

/// Per-photon decoherence increment κ and the resulting decoherence time.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DecoherenceTime {
    /// κ = 1 − (ΔA/A_𝔹)·Re Σ_j w_j Σ_{n̂∈𝔹} ⟨n̂|S_{x₁}^{p_j†}S_{x₂}^{p_j}|n̂⟩.
    pub kappa: f64,
    /// τ_D = 1/(2 κ photon_rate); +∞ when κ vanishes.
    pub tau_d: f64,
    /// Set when κ ≤ the no-decoherence threshold (identity-like scattering).
    pub no_decoherence: bool,
}

/// Decoherence time for a photon flux of `photon_rate` per unit time.
pub fn decoherence_time(
    model: &SkyModel,
    photon_rate: f64,
) -> Result<DecoherenceTime, PhotonError> {
    if photon_rate <= 0.0 || !photon_rate.is_finite() {
        return Err(PhotonError::BadPhotonRate(photon_rate));
    }
    let sums = all_node_sums(model)?;
    let n_b = model.partition.patch_cell_count() as f64;
    let kappa = 1.0 - weighted(model, &sums, |s| s.diag_re) / n_b;
    debug_assert!(kappa >= -1e-10, "negative decoherence increment {kappa}");
    let no_decoherence = kappa <= NO_DECOHERENCE_EPS;
    let tau_d = if no_decoherence {
        f64::INFINITY
    } else {
        1.0 / (2.0 * kappa * photon_rate)
    };
    Ok(DecoherenceTime {
        kappa,
        tau_d,
        no_decoherence,
    })
}

/// Receptivity α ∈ [0, 1]: the fraction of the scattering disturbance that
/// leaks from the observed patch into the rest of the sky,
/// α = Σ_j w_j Σ_{n̂∈𝔹, m̂∉𝔹} |T_{n̂m̂}|² / Σ_j w_j Σ_{n̂∈𝔹, m̂} |T_{n̂m̂}|²
/// with T = S_{x₁}^†S_{x₂} − I. A full-sphere patch has nothing to leak
/// into, so α = 0; a vanishing denominator (identity kernel, coincident
/// positions) is an error rather than a NaN.
pub fn receptivity(model: &SkyModel) -> Result<f64, PhotonError> {
    let sums = all_node_sums(model)?;
    let numerator = weighted(model, &sums, |s| s.cross_block);
    let denominator = weighted(model, &sums, |s| s.row_total);
    /* The denominator equals 2·♯𝔹·κ, so "no disturbance" is the same
     * condition as "no decoherence". */
    let n_b = model.partition.patch_cell_count() as f64;
    if denominator <= 2.0 * n_b * NO_DECOHERENCE_EPS {
        return Err(PhotonError::UndefinedReceptivity);
    }
    Ok(numerator / denominator)
}

/// Rate at which redundant copies appear: α/(τ_D ln(1/δ)). An infinite
/// decoherence time produces no records, so the rate is 0.
pub fn photon_redundancy_rate(alpha: f64, tau_d: f64, delta: f64) -> Result<f64, PhotonError> {
    if delta <= 0.0 || delta >= 1.0 || delta.is_nan() {
        return Err(PhotonError::DeltaOutOfRange(delta));
    }
    if tau_d.is_infinite() && tau_d > 0.0 {
        return Ok(0.0);
    }
    if tau_d <= 0.0 || tau_d.is_nan() {
        return Err(PhotonError::BadDecoherenceTime(tau_d));
    }
    Ok(alpha / (tau_d * (1.0 / delta).ln()))
}

/// Everything the photon analysis produces for one model, in one pass.
#[derive(Debug, Clone, Serialize)]
pub struct PhotonReport {
    pub cells: usize,
    pub patch_cells: usize,
    pub patch_area_sr: f64,
    pub momentum_nodes: usize,
    pub per_photon_overlap: f64,
    /// −ln of the per-photon overlap; +∞ for a vanishing overlap.
    pub xi_per_photon_nats: f64,
    pub kappa: f64,
    pub tau_d: f64,
    pub no_decoherence: bool,
    /// Absent when the denominator vanishes (no disturbance to apportion).
    pub alpha: Option<f64>,
    pub delta: f64,
    pub redundancy_rate: f64,
    /// α recomputed at a coarser companion resolution, when one was built.
    pub alpha_coarse: Option<f64>,
    /// |α − α_coarse|: the discretization error estimate.
    pub alpha_resolution_delta: Option<f64>,
}

/// Assemble the full photon report. A coarser companion model, when given,
/// provides the two-resolution error estimate on α.
pub fn photon_report(
    model: &SkyModel,
    photon_rate: f64,
    delta: f64,
    coarse: Option<&SkyModel>,
) -> Result<PhotonReport, PhotonError> {
    if delta <= 0.0 || delta >= 1.0 || delta.is_nan() {
        return Err(PhotonError::DeltaOutOfRange(delta));
    }
    if photon_rate <= 0.0 || !photon_rate.is_finite() {
        return Err(PhotonError::BadPhotonRate(photon_rate));
    }
    let sums = all_node_sums(model)?;
    let n_b = model.partition.patch_cell_count() as f64;
    let per_photon_overlap = weighted(model, &sums, |s| s.overlap);
    let xi_per_photon_nats = if per_photon_overlap == 0.0 {
        f64::INFINITY
    } else {
        (-per_photon_overlap.ln()).max(0.0)
    };
    let kappa = 1.0 - weighted(model, &sums, |s| s.diag_re) / n_b;
    let no_decoherence = kappa <= NO_DECOHERENCE_EPS;
    let tau_d = if no_decoherence {
        f64::INFINITY
    } else {
        1.0 / (2.0 * kappa * photon_rate)
    };
    let denominator = weighted(model, &sums, |s| s.row_total);
    let alpha = if denominator <= 2.0 * n_b * NO_DECOHERENCE_EPS {
        None
    } else {
        Some(weighted(model, &sums, |s| s.cross_block) / denominator)
    };
    let redundancy_rate = match alpha {
        Some(a) => photon_redundancy_rate(a, tau_d, delta)?,
        None => 0.0,
    };
    let alpha_coarse = match coarse {
        Some(m) => match receptivity(m) {
            Ok(a) => Some(a),
            Err(PhotonError::UndefinedReceptivity) => None,
            Err(e) => return Err(e),
        },
        None => None,
    };
    let alpha_resolution_delta = match (alpha, alpha_coarse) {
        (Some(a), Some(b)) => Some((a - b).abs()),
        _ => None,
    };
    Ok(PhotonReport {
        cells: model.partition.cell_count(),
        patch_cells: model.partition.patch_cell_count(),
        patch_area_sr: model.partition.patch_area(),
        momentum_nodes: model.spectrum.node_count(),
        per_photon_overlap,
        xi_per_photon_nats,
        kappa,
        tau_d,
        no_decoherence,
        alpha,
        delta,
        redundancy_rate,
        alpha_coarse,
        alpha_resolution_delta,
    })
}

/// Write a kernel family in the plain-text interchange format: a header
/// line `dim node_count`, then the x₁ family followed by the x₂ family,
/// each matrix row-major with one `re im` pair per line.
pub fn write_kernel_family(
    path: &Path,
    x1: &[ComplexMatrix],
    x2: &[ComplexMatrix],
) -> Result<(), PhotonError> {
    let dim = x1.first().map_or(0, |m| m.nrows());
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", dim, x1.len());
    for family in [x1, x2] {
        for matrix in family {
            for row in 0..matrix.nrows() {
                for col in 0..matrix.ncols() {
                    let z = matrix[(row, col)];
                    let _ = writeln!(out, "{:.17e} {:.17e}", z.re, z.im);
                }
            }
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Load a kernel family written by [`write_kernel_family`] (or by hand in
/// the same format). Unitarity is checked at model assembly, not here.
pub fn load_kernel_family(path: &Path) -> Result<KernelSpec, PhotonError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (header_idx, header) = lines
        .by_ref()
        .find(|(_, l)| !l.trim().is_empty())
        .ok_or_else(|| PhotonError::KernelFile {
            line: 1,
            reason: "empty file".into(),
        })?;
    let header_line = header_idx + 1;
    let mut parts = header.split_whitespace();
    let parse_usize = |token: Option<&str>, what: &str| -> Result<usize, PhotonError> {
        token
            .ok_or_else(|| PhotonError::KernelFile {
                line: header_line,
                reason: format!("missing {what} in header"),
            })?
            .parse()
            .map_err(|_| PhotonError::KernelFile {
                line: header_line,
                reason: format!("{what} is not a positive integer"),
            })
    };
    let dim = parse_usize(parts.next(), "dimension")?;
    let nodes = parse_usize(parts.next(), "node count")?;
    if dim == 0 || nodes == 0 {
        return Err(PhotonError::KernelFile {
            line: header_line,
            reason: "dimension and node count must be positive".into(),
        });
    }

    let mut entries: Vec<C64> = Vec::with_capacity(2 * nodes * dim * dim);
    let mut last_line = header_line;
    for (idx, line) in lines {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut tokens = trimmed.split_whitespace();
        let (re_tok, im_tok) = (tokens.next(), tokens.next());
        if tokens.next().is_some() {
            return Err(PhotonError::KernelFile {
                line: line_no,
                reason: "expected exactly one `re im` pair per line".into(),
            });
        }
        let parse = |tok: Option<&str>| -> Result<f64, PhotonError> {
            tok.ok_or_else(|| PhotonError::KernelFile {
                line: line_no,
                reason: "expected a `re im` pair".into(),
            })?
            .parse()
            .map_err(|_| PhotonError::KernelFile {
                line: line_no,
                reason: "entry is not a number".into(),
            })
        };
        entries.push(C64::new(parse(re_tok)?, parse(im_tok)?));
        last_line = line_no;
    }
    let expected = 2 * nodes * dim * dim;
    if entries.len() != expected {
        return Err(PhotonError::KernelFile {
            line: last_line,
            reason: format!(
                "expected {expected} entries for 2 positions x {nodes} nodes x {dim}x{dim}, \
                 got {}",
                entries.len()
            ),
        });
    }

    let mut take = entries.into_iter();
    let mut family = |_: usize| -> Vec<ComplexMatrix> {
        (0..nodes)
            .map(|_| {
                ComplexMatrix::from_shape_fn((dim, dim), |_| {
                    take.next().expect("entry count checked above")
                })
            })
            .collect()
    };
    Ok(KernelSpec::Explicit {
        x1: family(1),
        x2: family(2),
    })
}
