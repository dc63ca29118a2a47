//! Quantum Chernoff machinery: the branch-distinguishability overlap
//! tr[ρ₁^c ρ₂^{1−c}], its minimization over the exponent c, the typical
//! Chernoff information ξ̄ of an environment, redundancy estimates built from
//! it, and empirical decay-exponent fits.
//!
//! ξ̄ is reported in nats (natural log); entropies elsewhere are in bits. The
//! ln 2 conversion is applied only at report boundaries.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::info::{self, FragmentMetric, FragmentSampler, InfoError};
use crate::linalg::{
    fractional_power, hermitian_spectrum, matmul, trace, ComplexMatrix, DensityMatrix,
    LinalgError, DEFAULT_TOLERANCES,
};
use crate::model::{BranchEnsemble, DecoherenceModel, ModelError};
use crate::threads;

/// Exponent search interval is [C_MIN, 1 − C_MIN]: the endpoints c ∈ {0, 1}
/// degenerate to a plain trace and carry no distinguishability information.
pub const C_MIN: f64 = 1e-4;
/// Golden-section termination width in c.
pub const C_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ChernoffError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Info(#[from] Box<InfoError>),
    #[error("exponent c must lie strictly between 0 and 1, got {0}")]
    ExponentOutOfRange(f64),
    #[error("delta must lie strictly between 0 and 1, got {0}")]
    DeltaOutOfRange(f64),
    #[error("typical Chernoff information must be nonnegative, got {0}")]
    NegativeInformation(f64),
    #[error("need at least {expected} fragment sizes, got {got}")]
    TooFewPoints { expected: usize, got: usize },
    #[error("fragment sizes must be strictly ascending")]
    NotAscending,
    #[error("two-level systems only: pointer dimension is {0}")]
    PointerDimUnsupported(usize),
    #[error(
        "only {remaining} fragment sizes kept a nonzero average error probability; \
         at least 2 are needed to fit an exponent"
    )]
    TooFewAfterExclusion { remaining: usize },
}

impl From<InfoError> for ChernoffError {
    fn from(e: InfoError) -> Self {
        /* Collapse round-trips so callers see the original error kind instead
         * of an arbitrarily nested box. */
        match e {
            InfoError::Linalg(inner) => ChernoffError::Linalg(inner),
            InfoError::Model(inner) => ChernoffError::Model(inner),
            InfoError::Chernoff(inner) => *inner,
            other => ChernoffError::Info(Box::new(other)),
        }
    }
}

fn check_exponent(c: f64) -> Result<(), ChernoffError> {
    if !(c > 0.0 && c < 1.0) {
        return Err(ChernoffError::ExponentOutOfRange(c));
    }
    Ok(())
}

/// tr[A^c B^{1−c}] for positive semidefinite Hermitian A and B (not
/// necessarily unit trace). Real by construction; the imaginary residue of
/// the trace is asserted below 1e-10.
pub fn positive_overlap(
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    c: f64,
) -> Result<f64, ChernoffError> {
    check_exponent(c)?;
    let pa = fractional_power(a, c)?;
    let pb = fractional_power(b, 1.0 - c)?;
    let t = trace(&matmul(&pa, &pb));
    assert!(
        t.im.abs() <= 1e-10,
        "overlap trace has imaginary residue {}",
        t.im
    );
    Ok(t.re)
}

/// tr[ρ₁^c ρ₂^{1−c}] for states, clamped to [0, 1].
pub fn chernoff_overlap(
    rho1: &DensityMatrix,
    rho2: &DensityMatrix,
    c: f64,
) -> Result<f64, ChernoffError> {
    Ok(positive_overlap(rho1.matrix(), rho2.matrix(), c)?.clamp(0.0, 1.0))
}

/// Precomputed eigendata of a state pair for repeated overlap evaluation
/// across exponents: with ρ₁ = Σ a_i|u_i⟩⟨u_i| and ρ₂ = Σ b_j|v_j⟩⟨v_j|,
///
///   tr[ρ₁^c ρ₂^{1−c}] = Σ_{ij} a_i^c b_j^{1−c} |⟨u_i|v_j⟩|²
///
/// so each new c costs O(d²) instead of two fresh eigendecompositions.
#[derive(Debug, Clone)]
pub struct OverlapKernel {
    a: Vec<f64>,
    b: Vec<f64>,
    weights: Array2<f64>,
}

impl OverlapKernel {
    pub fn new(rho1: &DensityMatrix, rho2: &DensityMatrix) -> Result<Self, ChernoffError> {
        let tol = &DEFAULT_TOLERANCES;
        let s1 = hermitian_spectrum(rho1.matrix(), tol)?;
        let s2 = hermitian_spectrum(rho2.matrix(), tol)?;
        let cross = matmul(&crate::linalg::adjoint(&s1.eigenvectors), &s2.eigenvectors);
        let weights = cross.mapv(|z| z.norm_sqr());
        Ok(OverlapKernel {
            a: s1.eigenvalues,
            b: s2.eigenvalues,
            weights,
        })
    }

    /// Overlap at exponent `c`, clamped to [0, 1]. Eigenvalues at or below
    /// the clip tolerance are treated as exact zeros, matching
    /// [`fractional_power`].
    pub fn eval(&self, c: f64) -> f64 {
        let clip = DEFAULT_TOLERANCES.clip;
        let mut total = 0.0;
        for (i, &ai) in self.a.iter().enumerate() {
            if ai <= clip {
                continue;
            }
            let aic = ai.powf(c);
            for (j, &bj) in self.b.iter().enumerate() {
                if bj <= clip {
                    continue;
                }
                total += aic * bj.powf(1.0 - c) * self.weights[(i, j)];
            }
        }
        total.clamp(0.0, 1.0)
    }
}

/// Golden-section minimizer for a convex objective on [lo, hi]; returns the
/// midpoint of the final bracket and the objective there.
fn golden_section_min(
    mut lo: f64,
    mut hi: f64,
    xtol: f64,
    f: impl Fn(f64) -> f64,
) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > xtol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    let mid = 0.5 * (lo + hi);
    (mid, f(mid))
}

/* Flat-objective tie-break: when c = 1/2 does as well as the located
 * minimizer (to rounding), report c* = 1/2. Pure-state pairs make the
 * objective exactly constant in c, where any c is a minimizer. */
fn tie_break_to_half(c_star: f64, value: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let at_half = f(0.5);
    if at_half <= value + 1e-12 * value.abs().max(1.0) {
        (0.5, at_half)
    } else {
        (c_star, value)
    }
}

/// Minimizes tr[ρ₁^c ρ₂^{1−c}] over c ∈ [C_MIN, 1 − C_MIN] by golden-section
/// search (the objective is convex in c); returns (c*, minimum value). Flat
/// objectives report c* = 1/2.
pub fn min_chernoff_overlap(
    rho1: &DensityMatrix,
    rho2: &DensityMatrix,
) -> Result<(f64, f64), ChernoffError> {
    let kernel = OverlapKernel::new(rho1, rho2)?;
    let (c, v) = golden_section_min(C_MIN, 1.0 - C_MIN, C_TOL, |c| kernel.eval(c));
    Ok(tie_break_to_half(c, v, |c| kernel.eval(c)))
}

/// How the overlap exponent is chosen: a fixed value (default 1/2), or one
/// constant c minimizing the environment-averaged overlap. The constant is
/// shared across subsystems; per-subsystem exponents are deliberately not
/// offered.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExponentChoice {
    Fixed(f64),
    Optimize,
}

impl Default for ExponentChoice {
    fn default() -> Self {
        ExponentChoice::Fixed(0.5)
    }
}

/// Typical Chernoff information of an environment at one time.
#[derive(Debug, Clone, Serialize)]
pub struct TypicalChernoff {
    /// ξ̄ = −ln⟨overlap⟩ in nats; +∞ when every overlap vanishes.
    pub xi_nats: f64,
    /// The constant exponent used (the minimizer when optimized).
    pub c: f64,
    pub optimized: bool,
    /// (1/♯ℰ) Σ_k tr[ρ_{k|1}^c ρ_{k|2}^{1−c}] at that c.
    pub mean_overlap: f64,
    /// True when the mean overlap is exactly zero: every subsystem keeps a
    /// perfect record and ξ̄ is unbounded.
    pub perfect_records: bool,
}

fn branch_kernels(ensemble: &BranchEnsemble) -> Result<Vec<OverlapKernel>, ChernoffError> {
    let kernel_of = |k: usize| {
        OverlapKernel::new(
            ensemble.branch(k).conditional_state(0),
            ensemble.branch(k).conditional_state(1),
        )
    };
    if ensemble.is_uniform() {
        return Ok(vec![kernel_of(0)?]);
    }
    threads::install(|| {
        (0..ensemble.environment_size())
            .into_par_iter()
            .map(kernel_of)
            .collect()
    })
}

/* Mean over subsystems in ascending index order (bit-deterministic). A
 * single kernel stands for the whole environment when it is uniform: the
 * mean of ♯ℰ identical values is that value, computed without drift. */
fn mean_overlap(kernels: &[OverlapKernel], c: f64) -> f64 {
    if kernels.len() == 1 {
        return kernels[0].eval(c);
    }
    let sum: f64 = kernels.iter().map(|k| k.eval(c)).sum();
    sum / kernels.len() as f64
}

/// ξ̄ = −ln[(1/♯ℰ) Σ_k tr[ρ_{k|1}^c ρ_{k|2}^{1−c}]]: subsystem overlaps are
/// averaged FIRST, then the negative log is taken (the typical, not the
/// annealed, order). With `Optimize`, one constant c is chosen to maximize ξ̄
/// by minimizing the averaged overlap.
/* ξ̄ from an averaged overlap. An exact zero means every record is perfect
 * and the information diverges; it is flagged rather than returned as a NaN
 * from ln(0). */
fn xi_from_mean(mean: f64) -> (f64, bool) {
    if mean == 0.0 {
        (f64::INFINITY, true)
    } else {
        /* The mean can round to barely above 1 for identical states; ξ̄ is
         * nonnegative by construction, so clamp the −ln at zero. */
        ((-mean.ln()).max(0.0), false)
    }
}

pub fn typical_chernoff_information(
    ensemble: &BranchEnsemble,
    choice: ExponentChoice,
) -> Result<TypicalChernoff, ChernoffError> {
    if ensemble.pointer_dim() != 2 {
        return Err(ChernoffError::PointerDimUnsupported(ensemble.pointer_dim()));
    }
    let kernels = branch_kernels(ensemble)?;
    let (c, mean, optimized) = match choice {
        ExponentChoice::Fixed(c) => {
            check_exponent(c)?;
            (c, mean_overlap(&kernels, c), false)
        }
        ExponentChoice::Optimize => {
            let objective = |c: f64| mean_overlap(&kernels, c);
            let (c, v) = golden_section_min(C_MIN, 1.0 - C_MIN, C_TOL, objective);
            let (c, v) = tie_break_to_half(c, v, objective);
            (c, v, true)
        }
    };
    let (xi_nats, perfect_records) = xi_from_mean(mean);
    Ok(TypicalChernoff {
        xi_nats,
        c,
        optimized,
        mean_overlap: mean,
        perfect_records,
    })
}

/// Redundancy estimated from the typical Chernoff information.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RedundancyEstimate {
    /// ♯ℰ · ξ̄ / ln(1/δ).
    pub value: f64,
    /// Set when the estimate exceeds ♯ℰ: the asymptotic formula has left its
    /// domain of validity (δ is too large for this ξ̄), so the value is a
    /// flag, not a prediction.
    pub exceeds_environment: bool,
}

pub fn redundancy_estimate(
    environment_size: usize,
    xi_nats: f64,
    delta: f64,
) -> Result<RedundancyEstimate, ChernoffError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(ChernoffError::DeltaOutOfRange(delta));
    }
    if xi_nats.is_nan() || xi_nats < 0.0 {
        return Err(ChernoffError::NegativeInformation(xi_nats));
    }
    let value = environment_size as f64 * xi_nats / (1.0 / delta).ln();
    Ok(RedundancyEstimate {
        value,
        exceeds_environment: value > environment_size as f64,
    })
}

/// Least-squares line fit y = intercept + slope·x; residual is the RMS of
/// the fit residuals.
pub fn fit_line(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let ss: f64 = points
        .iter()
        .map(|&(x, y)| {
            let r = y - intercept - slope * x;
            r * r
        })
        .sum();
    (slope, intercept, (ss / n).sqrt())
}

/// Fit of −ln⟨P_e⟩ against fragment size m.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExponentFit {
    /// Decay rate per subsystem, in nats.
    pub slope: f64,
    pub intercept: f64,
    pub residual_rms: f64,
    /// (m, −ln⟨P_e⟩) pairs used in the fit.
    pub points: Vec<(usize, f64)>,
    /// Fragment sizes dropped because ⟨P_e⟩ was exactly zero there (a zero
    /// error probability has no finite log).
    pub excluded: Vec<usize>,
}

/// Fits the empirical error-decay exponent: computes ⟨P_e⟩ over fragments of
/// each size in `m_list` (analytic pure-branch Helstrom when available,
/// dense otherwise) and least-squares fits −ln⟨P_e⟩ against m. The slope
/// approaches ξ̄ from above as m grows; subexponential prefactors land in the
/// intercept.
pub fn empirical_error_exponent(
    model: &DecoherenceModel,
    t: f64,
    m_list: &[usize],
    sampler: &FragmentSampler,
) -> Result<ExponentFit, ChernoffError> {
    if m_list.len() < 3 {
        return Err(ChernoffError::TooFewPoints {
            expected: 3,
            got: m_list.len(),
        });
    }
    if m_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ChernoffError::NotAscending);
    }
    let mut points = Vec::with_capacity(m_list.len());
    let mut excluded = Vec::new();
    for &m in m_list {
        let (pe_mean, _stderr) =
            info::fragment_average(model, t, m, FragmentMetric::HelstromError, sampler)?;
        if pe_mean <= 0.0 {
            excluded.push(m);
        } else {
            points.push((m, -pe_mean.ln()));
        }
    }
    if points.len() < 2 {
        return Err(ChernoffError::TooFewAfterExclusion {
            remaining: points.len(),
        });
    }
    let float_points: Vec<(f64, f64)> = points.iter().map(|&(m, y)| (m as f64, y)).collect();
    let (slope, intercept, residual_rms) = fit_line(&float_points);
    Ok(ExponentFit {
        slope,
        intercept,
        residual_rms,
        points,
        excluded,
    })
}

/// Everything the Chernoff analysis produces for one (model, time).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChernoffReport {
    pub time: f64,
    pub environment_size: usize,
    /// Exponent actually used for ξ̄ and the per-subsystem overlaps.
    pub c: f64,
    pub optimized: bool,
    /// One entry per subsystem, ascending index; a single entry stands for
    /// every subsystem when the environment is uniform.
    pub per_subsystem_overlaps: Vec<f64>,
    pub uniform_environment: bool,
    pub mean_overlap: f64,
    pub xi_qcb_nats: f64,
    pub perfect_records: bool,
    /// Efficiency sandwich in nats: r_low = ξ̄ ≤ r ≤ 2ξ̄ = r_high.
    pub r_low_nats: f64,
    pub r_high_nats: f64,
    pub delta: f64,
    pub redundancy_estimate: f64,
    pub estimate_exceeds_environment: bool,
    /// Present when fragment sizes were supplied for an empirical decay fit.
    pub exponent_fit: Option<ExponentFit>,
}

/// Assembles the full Chernoff report: ξ̄ at the chosen (or optimized) c, the
/// per-subsystem overlaps, the efficiency sandwich, the redundancy estimate
/// at `delta`, and optionally an empirical exponent fit over `m_list`.
pub fn chernoff_report(
    model: &DecoherenceModel,
    t: f64,
    choice: ExponentChoice,
    delta: f64,
    m_list: Option<&[usize]>,
    sampler: &FragmentSampler,
) -> Result<ChernoffReport, ChernoffError> {
    let ensemble = model.branch_ensemble(t)?;
    let typical = typical_chernoff_information(&ensemble, choice)?;
    let kernels = branch_kernels(&ensemble)?;
    let per_subsystem_overlaps: Vec<f64> = kernels.iter().map(|k| k.eval(typical.c)).collect();
    let estimate = redundancy_estimate(model.environment_size(), typical.xi_nats, delta)?;
    let exponent_fit = match m_list {
        Some(ms) => Some(empirical_error_exponent(model, t, ms, sampler)?),
        None => None,
    };
    Ok(ChernoffReport {
        time: t,
        environment_size: model.environment_size(),
        c: typical.c,
        optimized: typical.optimized,
        uniform_environment: ensemble.is_uniform(),
        per_subsystem_overlaps,
        mean_overlap: typical.mean_overlap,
        xi_qcb_nats: typical.xi_nats,
        perfect_records: typical.perfect_records,
        r_low_nats: typical.xi_nats,
        r_high_nats: 2.0 * typical.xi_nats,
        delta,
        redundancy_estimate: estimate.value,
        estimate_exceeds_environment: estimate.exceeds_environment,
        exponent_fit,
    })
}
