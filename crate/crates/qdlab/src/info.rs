//! Information metrics over environment fragments: the Holevo quantity, the
//! quantum mutual information, the Helstrom error probability and its product
//! bound, the Fano and fidelity bounds around χ, deterministic fragment
//! averaging, and the redundancy threshold search.
//!
//! All entropies and information quantities here are in bits.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use itertools::Itertools;
use ndarray::Array2;
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chernoff::{self, ChernoffError};
use crate::linalg::{
    entropy_of_eigenvalues, hermitian_eigenvalues, partial_trace, tensor_product_capped,
    trace_norm, ComplexMatrix, DensityMatrix, LinalgError, DEFAULT_TOLERANCES, DENSE_DIM_CAP,
};
use crate::model::{BranchEnsemble, DecoherenceModel, Fragment, ModelError};
use crate::threads;

/// Dense fragment computations (Holevo, trace-norm Helstrom, fidelity) are
/// limited to a fragment Hilbert dimension Π_{k∈F} d_k of 2¹²; the joint
/// system-fragment computations use the larger [`DENSE_DIM_CAP`].
pub const FRAGMENT_DENSE_CAP: usize = 1 << 12;

/// Report rows fall back to skipping a dense-only column (reported as absent)
/// once the dense dimension passes this much smaller bound: a report sweeps
/// many fragment sizes times many sampled subsets, where a borderline-cap
/// eigendecomposition per subset would silently take hours.
const ROW_DENSE_CAP: usize = 1 << 9;

/// Exhaustive enumeration refuses above this many subsets by default.
pub const EXHAUSTIVE_CAP: u128 = 1_000_000;

/// Monte Carlo sample count used when a caller does not choose one.
pub const DEFAULT_SAMPLE_COUNT: usize = 400;

/* Domain-separation tag mixed into every subset-stream seed so fragment
 * sampling can never collide with another consumer of the same master seed. */
const FRAGMENT_STREAM_TAG: u64 = 0x7164_6c61_6266_7261;

/* Pointer probabilities are accepted when they sum to 1 within this. */
const PRIOR_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum InfoError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Chernoff(Box<ChernoffError>),
    #[error("dense dimension {dim} exceeds the cap {cap}")]
    DenseCapExceeded { dim: usize, cap: usize },
    #[error("{what}; {use_instead}")]
    UnsupportedPath { what: String, use_instead: String },
    #[error("priors must be {expected} nonnegative numbers summing to 1, got {got:?}")]
    PriorsInvalid { expected: usize, got: Vec<f64> },
    #[error("error probability must lie in [0, 1/2], got {0}")]
    PeOutOfRange(f64),
    #[error("delta must lie strictly between 0 and 1, got {0}")]
    DeltaOutOfRange(f64),
    #[error(
        "C({n}, {m}) = {subsets} subsets exceed the exhaustive cap {cap}; \
         switch the sampler to Monte Carlo mode"
    )]
    ExhaustiveCapExceeded { n: usize, m: usize, subsets: u128, cap: u128 },
    #[error("sampler was built for an environment of {sampler} subsystems, the model has {model}")]
    SamplerSizeMismatch { sampler: usize, model: usize },
    #[error("two-outcome analysis only: pointer dimension is {0}, need exactly 2")]
    PointerDimUnsupported(usize),
    #[error("fragment size {m} exceeds the environment size {environment}")]
    FragmentSizeOutOfRange { m: usize, environment: usize },
    #[error("Monte Carlo mode needs a positive sample count")]
    ZeroSampleCount,
}

impl From<ChernoffError> for InfoError {
    fn from(e: ChernoffError) -> Self {
        /* Collapse round-trips so callers see the original error kind instead
         * of an arbitrarily nested box. */
        match e {
            ChernoffError::Linalg(inner) => InfoError::Linalg(inner),
            ChernoffError::Model(inner) => InfoError::Model(inner),
            ChernoffError::Info(inner) => *inner,
            other => InfoError::Chernoff(Box::new(other)),
        }
    }
}

fn check_priors(priors: &[f64], pointer_dim: usize) -> Result<(), InfoError> {
    let shape_ok = priors.len() == pointer_dim
        && priors.iter().all(|p| p.is_finite() && *p >= -PRIOR_SUM_TOL)
        && (priors.iter().sum::<f64>() - 1.0).abs() <= PRIOR_SUM_TOL;
    if !shape_ok {
        return Err(InfoError::PriorsInvalid {
            expected: pointer_dim,
            got: priors.to_vec(),
        });
    }
    Ok(())
}

fn check_fragment(ensemble: &BranchEnsemble, fragment: &Fragment) -> Result<(), InfoError> {
    if let Some(&last) = fragment.indices().last() {
        let size = ensemble.environment_size();
        if last >= size {
            return Err(InfoError::Model(ModelError::FragmentIndexOutOfRange {
                index: last,
                size,
            }));
        }
    }
    Ok(())
}

fn two_level(ensemble: &BranchEnsemble) -> Result<(), InfoError> {
    if ensemble.pointer_dim() != 2 {
        return Err(InfoError::PointerDimUnsupported(ensemble.pointer_dim()));
    }
    Ok(())
}

/// H_bin(p) = −p log₂ p − (1−p) log₂(1−p), with 0·log 0 = 0.
pub fn binary_entropy_bits(p: f64) -> f64 {
    entropy_of_eigenvalues(&[p, 1.0 - p], DEFAULT_TOLERANCES.clip)
}

/* (1 − √(1−x))/2 evaluated as x/(2(1 + √(1−x))). The textbook form loses all
 * significant digits once x ≲ 1e-8 and rounds to exactly 0 near x ≈ 1e-16;
 * the error-decay pipelines push x down to 1e-26 and beyond, where the small
 * eigenvalue must stay strictly positive for −ln P_e to exist. */
fn stable_small_root(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x / (2.0 * (1.0 + (1.0 - x).sqrt()))
}

/// Eigenvalues (μ₊, μ₋) of the mixture p₁ϱ₁ + p₂ϱ₂ of two pure states with
/// overlap modulus `lambda`: μ_± = (1 ± √(1 − 4p₁p₂(1−λ²)))/2. The remaining
/// eigenvalues of the mixture are zero. μ₋ is computed in a
/// cancellation-free form, so it stays accurate arbitrarily close to 0.
pub fn mixture_eigenvalues(p1: f64, p2: f64, lambda: f64) -> (f64, f64) {
    let l = lambda.abs().min(1.0);
    let x = (4.0 * p1 * p2 * (1.0 - l * l)).clamp(0.0, 1.0);
    let mu_minus = stable_small_root(x);
    (1.0 - mu_minus, mu_minus)
}

/* ⊗_{k∈F} ρ_{k|s}(t) in ascending subsystem order; 1×1 [1] for the empty
 * fragment. The dimension is pre-checked so the cap error names the full
 * fragment dimension rather than whichever partial product tripped first. */
fn fragment_branch_state(
    ensemble: &BranchEnsemble,
    fragment: &Fragment,
    s: usize,
    cap: usize,
) -> Result<ComplexMatrix, InfoError> {
    let dim = fragment_dim(ensemble, fragment);
    if dim > cap {
        return Err(InfoError::DenseCapExceeded { dim, cap });
    }
    let mut state = Array2::from_elem((1, 1), C64::new(1.0, 0.0));
    for &k in fragment.indices() {
        state = tensor_product_capped(&state, ensemble.branch(k).conditional_state(s).matrix(), cap)?;
    }
    Ok(state)
}

fn fragment_dim(ensemble: &BranchEnsemble, fragment: &Fragment) -> usize {
    fragment
        .indices()
        .iter()
        .map(|&k| ensemble.branch(k).conditional_state(0).dim())
        .fold(1usize, usize::saturating_mul)
}

/// χ(Π̂:F) = H(Σ_ŝ p_ŝ ρ_{F|ŝ}) − Σ_ŝ p_ŝ H(ρ_{F|ŝ}) by explicit dense
/// construction of the conditional fragment states. Works for any pointer
/// dimension and mixed branches; the fragment dimension is capped at
/// [`FRAGMENT_DENSE_CAP`].
pub fn holevo_dense(
    ensemble: &BranchEnsemble,
    fragment: &Fragment,
    priors: &[f64],
) -> Result<f64, InfoError> {
    holevo_dense_capped(ensemble, fragment, priors, FRAGMENT_DENSE_CAP)
}

fn holevo_dense_capped(
    ensemble: &BranchEnsemble,
    fragment: &Fragment,
    priors: &[f64],
    cap: usize,
) -> Result<f64, InfoError> {
    check_priors(priors, ensemble.pointer_dim())?;
    check_fragment(ensemble, fragment)?;
    let clip = DEFAULT_TOLERANCES.clip;
    let mut mixture: Option<ComplexMatrix> = None;
    let mut conditional = 0.0;
    for (s, &p) in priors.iter().enumerate() {
        let state = fragment_branch_state(ensemble, fragment, s, cap)?;
        conditional += p * entropy_of_eigenvalues(&hermitian_eigenvalues(&state)?, clip);
        let weighted = state.mapv(|z| z * C64::new(p, 0.0));
        mixture = Some(match mixture {
            Some(acc) => acc + &weighted,
            None => weighted,
        });
    }
    let mixture = mixture.expect("pointer dimension is at least 2");
    let mixed = entropy_of_eigenvalues(&hermitian_eigenvalues(&mixture)?, clip);
    Ok((mixed - conditional).max(0.0))
}

/// Closed-form χ for pure branch states of a two-level pointer: the
/// conditional entropies vanish and the mixture spectrum is
/// [`mixture_eigenvalues`] of |Λ_F| = |Π_{k∈F} λ_k(t)|, so
/// χ = −μ₊log₂μ₊ − μ₋log₂μ₋ at any fragment size.
pub fn holevo_pure_branches(
    ensemble: &BranchEnsemble,
    fragment: &Fragment,
    priors: &[f64],
) -> Result<f64, InfoError> {
    two_level(ensemble)?;
    check_priors(priors, 2)?;
    check_fragment(ensemble, fragment)?;
    if !ensemble.pure_branches() {
        return Err(InfoError::UnsupportedPath {
            what: "the closed-form Holevo quantity requires pure branch states".into(),
            use_instead: "use holevo_dense for mixed branches".into(),
        });
    }
    let lambda = ensemble.decoherence_factor(fragment, 0, 1).norm();
    let (mu_plus, mu_minus) = mixture_eigenvalues(priors[0], priors[1], lambda);
    Ok(entropy_of_eigenvalues(&[mu_plus, mu_minus], DEFAULT_TOLERANCES.clip))
}

/// χ by the cheapest valid path: the closed form when branches are pure and
/// the pointer is two-level, the dense construction otherwise.
pub fn holevo_bits(
    ensemble: &BranchEnsemble,
    fragment: &Fragment,
    priors: &[f64],
) -> Result<f64, InfoError> {
    if ensemble.pure_branches() && ensemble.pointer_dim() == 2 {
        holevo_pure_branches(ensemble, fragment, priors)
    } else {
        holevo_dense(ensemble, fragment, priors)
    }
}

/// I(S:F) = H_S + H_F − H_SF on the joint system-fragment state.
///
/// Globally pure two-level models use a closed form valid at any fragment
/// size; otherwise the joint state is built densely (dimension capped at
/// [`DENSE_DIM_CAP`] including the system factor) and the three entropies
/// come from its spectrum and partial traces.
pub fn mutual_information(
    model: &DecoherenceModel,
    fragment: &Fragment,
    t: f64,
) -> Result<f64, InfoError> {
    let ensemble = model.branch_ensemble(t)?;
    mutual_information_from(model, &ensemble, fragment, DENSE_DIM_CAP)
}

pub(crate) fn mutual_information_from(
    model: &DecoherenceModel,
    ensemble: &BranchEnsemble,
    fragment: &Fragment,
    dense_cap: usize,
) -> Result<f64, InfoError> {
    check_fragment(ensemble, fragment)?;
    if fragment.is_empty() {
        return Ok(0.0);
    }
    if model.globally_pure() && ensemble.pointer_dim() == 2 {
        return mutual_information_closed(model, ensemble, fragment);
    }
    let dim = ensemble.pointer_dim().saturating_mul(fragment_dim(ensemble, fragment));
    if dim > dense_cap {
        return Err(InfoError::DenseCapExceeded { dim, cap: dense_cap });
    }
    mutual_information_dense(model, ensemble, fragment)
}

fn mutual_information_dense(
    model: &DecoherenceModel,
    ensemble: &BranchEnsemble,
    fragment: &Fragment,
) -> Result<f64, InfoError> {
    let joint = model.joint_state_with_ensemble(ensemble, fragment)?;
    let mut dims = Vec::with_capacity(fragment.size() + 1);
    dims.push(ensemble.pointer_dim());
    for &k in fragment.indices() {
        dims.push(ensemble.branch(k).conditional_state(0).dim());
    }
    let keep_fragment: Vec<usize> = (1..dims.len()).collect();
    let rho_s = partial_trace(&joint, &dims, &[0])?;
    let rho_f = partial_trace(&joint, &dims, &keep_fragment)?;
    let clip = DEFAULT_TOLERANCES.clip;
    let h_sf = entropy_of_eigenvalues(&hermitian_eigenvalues(joint.matrix())?, clip);
    let h_s = entropy_of_eigenvalues(&hermitian_eigenvalues(rho_s.matrix())?, clip);
    let h_f = entropy_of_eigenvalues(&hermitian_eigenvalues(rho_f.matrix())?, clip);
    Ok((h_s + h_f - h_sf).max(0.0))
}

/* For a globally pure two-level model all three entropies have two-point
 * spectra: ρ_S(t) keeps its initial coherence damped by the full-environment
 * factor, ρ_F is a two-pure-state mixture with overlap |Λ_F|, and global
 * purity makes H_SF the entropy of the complement, another such mixture with
 * overlap |Λ_{ℰ∖F}|. No dimension enters, so this path has no cap. */
fn mutual_information_closed(
    model: &DecoherenceModel,
    ensemble: &BranchEnsemble,
    fragment: &Fragment,
) -> Result<f64, InfoError> {
    let priors = model.pointer().probabilities();
    let (p1, p2) = (priors[0], priors[1]);
    let clip = DEFAULT_TOLERANCES.clip;
    let lambda_f = ensemble.decoherence_factor(fragment, 0, 1);
    let complement = fragment.complement(model.environment_size())?;
    let lambda_c = ensemble.decoherence_factor(&complement, 0, 1);

    let coherence =
        (model.pointer().initial_state().matrix()[(0, 1)] * lambda_f * lambda_c).norm();
    let x = (4.0 * (p1 * p2 - coherence * coherence)).clamp(0.0, 1.0);
    let mu = stable_small_root(x);
    let h_s = entropy_of_eigenvalues(&[1.0 - mu, mu], clip);

    let (fp, fm) = mixture_eigenvalues(p1, p2, lambda_f.norm());
    let h_f = entropy_of_eigenvalues(&[fp, fm], clip);
    let (cp, cm) = mixture_eigenvalues(p1, p2, lambda_c.norm());
    let h_sf = entropy_of_eigenvalues(&[cp, cm], clip);
    Ok((h_s + h_f - h_sf).max(0.0))
}

/// Minimal error probability for guessing the pointer outcome from a
/// fragment: P_e = (1 − ‖p₁ρ_{F|1} − p₂ρ_{F|2}‖₁)/2. Pure branches use the
/// analytic form P_e = (1 − √(1 − 4p₁p₂|Λ_F|²))/2 automatically (evaluated
/// cancellation-free), any fragment size; mixed branches go through the
/// dense trace norm under [`FRAGMENT_DENSE_CAP`].
pub fn helstrom_error(
    ensemble: &BranchEnsemble,
    fragment: &Fragment,
    priors: &[f64],
) -> Result<f64, InfoError> {
    helstrom_capped(ensemble, fragment, priors, FRAGMENT_DENSE_CAP)
}

fn helstrom_capped(
    ensemble: &BranchEnsemble,
    fragment: &Fragment,
    priors: &[f64],
    cap: usize,
) -> Result<f64, InfoError> {
    two_level(ensemble)?;
    check_priors(priors, 2)?;
    check_fragment(ensemble, fragment)?;
    if ensemble.pure_branches() {
        let lambda = ensemble.decoherence_factor(fragment, 0, 1).norm();
        return Ok(stable_small_root(4.0 * priors[0] * priors[1] * lambda * lambda));
    }
    helstrom_dense(ensemble, fragment, priors, cap)
}

fn helstrom_dense(
    ensemble: &BranchEnsemble,
    fragment: &Fragment,
    priors: &[f64],
    cap: usize,
) -> Result<f64, InfoError> {
    let a = fragment_branch_state(ensemble, fragment, 0, cap)?;
    let b = fragment_branch_state(ensemble, fragment, 1, cap)?;
    let weighted =
        a.mapv(|z| z * C64::new(priors[0], 0.0)) - b.mapv(|z| z * C64::new(priors[1], 0.0));
    let distance = trace_norm(&weighted)?;
    Ok(((1.0 - distance) / 2.0).clamp(0.0, 0.5))
}

/// Product bound on the Helstrom error: P_e ≤ P_e*(c) = p₁^c p₂^{1−c}
/// Π_{k∈F} tr[ρ_{k|1}^c ρ_{k|2}^{1−c}] for any 0 < c < 1. The product runs
/// in ascending subsystem order; a uniform ensemble evaluates its single
/// distinct overlap once.
pub fn pe_star_bound(
    ensemble: &BranchEnsemble,
    fragment: &Fragment,
    priors: &[f64],
    c: f64,
) -> Result<f64, InfoError> {
    two_level(ensemble)?;
    check_priors(priors, 2)?;
    check_fragment(ensemble, fragment)?;
    let mut product = priors[0].powf(c) * priors[1].powf(1.0 - c);
    if ensemble.is_uniform() && !fragment.is_empty() {
        let k0 = fragment.indices()[0];
        let overlap = chernoff::chernoff_overlap(
            ensemble.branch(k0).conditional_state(0),
            ensemble.branch(k0).conditional_state(1),
            c,
        )?;
        for _ in fragment.indices() {
            product *= overlap;
        }
    } else {
        for &k in fragment.indices() {
            let overlap = chernoff::chernoff_overlap(
                ensemble.branch(k).conditional_state(0),
                ensemble.branch(k).conditional_state(1),
                c,
            )?;
            product *= overlap;
        }
    }
    Ok(product)
}

/// Fano bound from below: χ ≥ H_S − H_bin(P_e) for a two-level pointer,
/// clamped at zero.
pub fn fano_lower_bound(pe: f64, h_s_bits: f64) -> Result<f64, InfoError> {
    if !(-1e-10..=0.5 + 1e-10).contains(&pe) {
        return Err(InfoError::PeOutOfRange(pe));
    }
    let pe = pe.clamp(0.0, 0.5);
    Ok((h_s_bits - binary_entropy_bits(pe)).max(0.0))
}

/// Fidelity bound from above: χ ≤ H_bin((1 − √F)/2) with F the squared
/// fidelity between the two conditional fragment states. Established only
/// for p₁ = p₂; other priors are refused rather than extrapolated.
pub fn fidelity_upper_bound(
    ensemble: &BranchEnsemble,
    fragment: &Fragment,
    priors: &[f64],
) -> Result<f64, InfoError> {
    fidelity_upper_capped(ensemble, fragment, priors, FRAGMENT_DENSE_CAP)
}

fn fidelity_upper_capped(
    ensemble: &BranchEnsemble,
    fragment: &Fragment,
    priors: &[f64],
    cap: usize,
) -> Result<f64, InfoError> {
    two_level(ensemble)?;
    check_priors(priors, 2)?;
    check_fragment(ensemble, fragment)?;
    if (priors[0] - priors[1]).abs() > 1e-12 {
        return Err(InfoError::UnsupportedPath {
            what: "the fidelity upper bound is established for equal pointer probabilities only"
                .into(),
            use_instead: "omit this bound for unequal priors".into(),
        });
    }
    let sqrt_f = if ensemble.pure_branches() {
        ensemble.decoherence_factor(fragment, 0, 1).norm().min(1.0)
    } else {
        fidelity_dense(ensemble, fragment, cap)?.sqrt()
    };
    Ok(binary_entropy_bits((1.0 - sqrt_f) / 2.0))
}

fn fidelity_dense(
    ensemble: &BranchEnsemble,
    fragment: &Fragment,
    cap: usize,
) -> Result<f64, InfoError> {
    let a = fragment_branch_state(ensemble, fragment, 0, cap)?;
    let b = fragment_branch_state(ensemble, fragment, 1, cap)?;
    Ok(crate::linalg::fidelity(
        &DensityMatrix::from_trusted(a),
        &DensityMatrix::from_trusted(b),
    )?)
}

/// How fragments of a given size are chosen for averaging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    /// Enumerate every subset (refused above the exhaustive cap).
    Exhaustive,
    /// Draw `sample_count` uniform subsets from a deterministic stream.
    MonteCarlo,
}

/// Deterministic fragment chooser. The subset stream for a given (time, m)
/// is seeded by (master_seed, t, m), so repeated runs and different metrics
/// evaluated at the same point see identical subsets.
#[derive(Debug, Clone)]
pub struct FragmentSampler {
    mode: SamplingMode,
    sample_count: usize,
    master_seed: u64,
    environment_size: usize,
    exhaustive_cap: u128,
}

impl FragmentSampler {
    pub fn new(
        mode: SamplingMode,
        sample_count: usize,
        master_seed: u64,
        environment_size: usize,
    ) -> Result<Self, InfoError> {
        if mode == SamplingMode::MonteCarlo && sample_count == 0 {
            return Err(InfoError::ZeroSampleCount);
        }
        Ok(FragmentSampler {
            mode,
            sample_count,
            master_seed,
            environment_size,
            exhaustive_cap: EXHAUSTIVE_CAP,
        })
    }

    /// Exhaustive enumeration (the seed is kept for provenance only).
    pub fn exhaustive(master_seed: u64, environment_size: usize) -> Self {
        FragmentSampler {
            mode: SamplingMode::Exhaustive,
            sample_count: DEFAULT_SAMPLE_COUNT,
            master_seed,
            environment_size,
            exhaustive_cap: EXHAUSTIVE_CAP,
        }
    }

    pub fn monte_carlo(
        master_seed: u64,
        sample_count: usize,
        environment_size: usize,
    ) -> Result<Self, InfoError> {
        FragmentSampler::new(SamplingMode::MonteCarlo, sample_count, master_seed, environment_size)
    }

    /// Override the exhaustive-enumeration refusal threshold (clamped to
    /// 10¹² to keep the subset count computation exact).
    pub fn with_exhaustive_cap(mut self, cap: u128) -> Self {
        self.exhaustive_cap = cap.min(1_000_000_000_000);
        self
    }

    pub fn mode(&self) -> SamplingMode {
        self.mode
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn environment_size(&self) -> usize {
        self.environment_size
    }

    fn stream_for(&self, t: f64, m: usize) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        seed[0..8].copy_from_slice(&self.master_seed.to_le_bytes());
        seed[8..16].copy_from_slice(&t.to_bits().to_le_bytes());
        seed[16..24].copy_from_slice(&(m as u64).to_le_bytes());
        seed[24..32].copy_from_slice(&FRAGMENT_STREAM_TAG.to_le_bytes());
        ChaCha8Rng::from_seed(seed)
    }

    /* The subsets to evaluate for one (t, m), plus whether their spread is
     * statistical. Uniform models and single-subset sizes short-circuit to
     * one representative fragment: every size-m fragment of a uniform model
     * carries identical metrics, so sampling would only add noise. */
    fn plan_subsets(
        &self,
        model: &DecoherenceModel,
        t: f64,
        m: usize,
    ) -> Result<SubsetPlan, InfoError> {
        let n = self.environment_size;
        if m > n {
            return Err(InfoError::FragmentSizeOutOfRange { m, environment: n });
        }
        let subsets = binomial_capped(n, m, self.exhaustive_cap);
        if subsets == 1 || model.is_uniform() {
            return Ok(SubsetPlan {
                fragments: vec![Fragment::leading(m, n)?],
                monte_carlo: false,
            });
        }
        match self.mode {
            SamplingMode::Exhaustive => {
                if subsets > self.exhaustive_cap {
                    return Err(InfoError::ExhaustiveCapExceeded {
                        n,
                        m,
                        subsets,
                        cap: self.exhaustive_cap,
                    });
                }
                let fragments = (0..n)
                    .combinations(m)
                    .map(|indices| Fragment::new(indices, n))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(SubsetPlan { fragments, monte_carlo: false })
            }
            SamplingMode::MonteCarlo => {
                let mut rng = self.stream_for(t, m);
                let fragments = (0..self.sample_count)
                    .map(|_| {
                        let indices = rand::seq::index::sample(&mut rng, n, m).into_vec();
                        Fragment::new(indices, n)
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(SubsetPlan { fragments, monte_carlo: true })
            }
        }
    }
}

struct SubsetPlan {
    fragments: Vec<Fragment>,
    monte_carlo: bool,
}

/* Exact running binomial coefficient, early-exited just beyond `cap` (the
 * product C(n,k)·(n−k)/(k+1) stays integral at every step). */
fn binomial_capped(n: usize, m: usize, cap: u128) -> u128 {
    let m = m.min(n - m);
    let mut acc: u128 = 1;
    for i in 0..m {
        acc = acc * (n - i) as u128 / (i as u128 + 1);
        if acc > cap {
            return cap + 1;
        }
    }
    acc
}

fn mean_stderr(values: &[f64], monte_carlo: bool) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if !monte_carlo || values.len() < 2 {
        return (mean, 0.0);
    }
    let variance = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (variance / n).sqrt())
}

/// Which per-fragment quantity [`fragment_average`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FragmentMetric {
    HolevoBits,
    MutualInformationBits,
    HelstromError,
    FanoLowerBits,
    FidelityUpperBits,
}

fn metric_value(
    model: &DecoherenceModel,
    ensemble: &BranchEnsemble,
    fragment: &Fragment,
    metric: FragmentMetric,
) -> Result<f64, InfoError> {
    let priors = model.pointer().probabilities();
    match metric {
        FragmentMetric::HolevoBits => holevo_bits(ensemble, fragment, priors),
        FragmentMetric::MutualInformationBits => {
            mutual_information_from(model, ensemble, fragment, DENSE_DIM_CAP)
        }
        FragmentMetric::HelstromError => helstrom_error(ensemble, fragment, priors),
        FragmentMetric::FanoLowerBits => {
            let pe = helstrom_error(ensemble, fragment, priors)?;
            fano_lower_bound(pe, model.pointer().pointer_entropy_bits())
        }
        FragmentMetric::FidelityUpperBits => fidelity_upper_bound(ensemble, fragment, priors),
    }
}

/// (mean, standard error) of a metric over fragments of size `m`.
///
/// Exhaustive mode enumerates every subset in lexicographic order (standard
/// error 0); Monte Carlo mode draws `sample_count` subsets from the
/// deterministic stream and reports sd/√N. Evaluations run in parallel but
/// reduce in sample order, so results are bit-identical at any worker count.
pub fn fragment_average(
    model: &DecoherenceModel,
    t: f64,
    m: usize,
    metric: FragmentMetric,
    sampler: &FragmentSampler,
) -> Result<(f64, f64), InfoError> {
    if sampler.environment_size() != model.environment_size() {
        return Err(InfoError::SamplerSizeMismatch {
            sampler: sampler.environment_size(),
            model: model.environment_size(),
        });
    }
    let ensemble = model.branch_ensemble(t)?;
    fragment_average_with(model, &ensemble, m, metric, sampler)
}

fn fragment_average_with(
    model: &DecoherenceModel,
    ensemble: &BranchEnsemble,
    m: usize,
    metric: FragmentMetric,
    sampler: &FragmentSampler,
) -> Result<(f64, f64), InfoError> {
    let plan = sampler.plan_subsets(model, ensemble.time(), m)?;
    let values: Vec<f64> = threads::install(|| {
        plan.fragments
            .par_iter()
            .map(|fragment| metric_value(model, ensemble, fragment, metric))
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(mean_stderr(&values, plan.monte_carlo))
}

/// One fragment size in an [`InformationReport`]. χ is always present; the
/// other columns are absent when their path is refused (fidelity at unequal
/// priors) or when only a dense route exists and the dimension is too large
/// for per-sample evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportRow {
    pub m: usize,
    pub chi_mean_bits: f64,
    pub chi_stderr: f64,
    pub i_mean_bits: Option<f64>,
    pub pe_mean: Option<f64>,
    pub fano_lb_bits: Option<f64>,
    pub fid_ub_bits: Option<f64>,
}

/// Whether the redundancy threshold was reached within the environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RedundancyStatus {
    #[serde(rename = "achieved")]
    Achieved,
    #[serde(rename = "insufficient information")]
    InsufficientInformation,
}

impl fmt::Display for RedundancyStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RedundancyStatus::Achieved => write!(f, "achieved"),
            RedundancyStatus::InsufficientInformation => write!(f, "insufficient information"),
        }
    }
}

/// Full output of the redundancy analysis at one time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InformationReport {
    pub time: f64,
    pub environment_size: usize,
    /// Pointer entropy H_S in bits; the threshold is (1−δ)·H_S.
    pub h_s_bits: f64,
    pub delta: f64,
    pub target_bits: f64,
    pub rows: Vec<ReportRow>,
    /// Smallest fragment size whose average χ reaches the threshold.
    pub m_delta: Option<usize>,
    /// ♯ℰ / m_δ, or 0 when the threshold is never reached.
    pub redundancy: f64,
    pub status: RedundancyStatus,
    /// Where the threshold crossing would fall if m were continuous: linear
    /// interpolation between the last failing and first passing size. A
    /// labeled auxiliary only; m_δ and R_δ always use the integer crossing.
    pub interpolated_m: Option<f64>,
}

struct RowValues {
    chi: f64,
    mi: Option<f64>,
    pe: Option<f64>,
    fano: Option<f64>,
    fid: Option<f64>,
}

/* Resource refusals become absent columns; genuine errors propagate. */
fn resource_to_none(result: Result<f64, InfoError>) -> Result<Option<f64>, InfoError> {
    match result {
        Ok(v) => Ok(Some(v)),
        Err(InfoError::DenseCapExceeded { .. })
        | Err(InfoError::UnsupportedPath { .. })
        | Err(InfoError::PointerDimUnsupported(_))
        | Err(InfoError::Model(ModelError::JointDimensionTooLarge { .. })) => Ok(None),
        Err(e) => Err(e),
    }
}

fn row_values(
    model: &DecoherenceModel,
    ensemble: &BranchEnsemble,
    fragment: &Fragment,
    h_s: f64,
) -> Result<RowValues, InfoError> {
    let priors = model.pointer().probabilities();
    let chi = holevo_bits(ensemble, fragment, priors)?;
    let mi = resource_to_none(mutual_information_from(model, ensemble, fragment, ROW_DENSE_CAP))?;
    let pe = resource_to_none(helstrom_capped(ensemble, fragment, priors, ROW_DENSE_CAP))?;
    let fano = match pe {
        Some(p) => Some(fano_lower_bound(p, h_s)?),
        None => None,
    };
    let fid = resource_to_none(fidelity_upper_capped(ensemble, fragment, priors, ROW_DENSE_CAP))?;
    Ok(RowValues { chi, mi, pe, fano, fid })
}

fn evaluate_row(
    model: &DecoherenceModel,
    ensemble: &BranchEnsemble,
    m: usize,
    sampler: &FragmentSampler,
    h_s: f64,
) -> Result<ReportRow, InfoError> {
    let plan = sampler.plan_subsets(model, ensemble.time(), m)?;
    let samples: Vec<RowValues> = threads::install(|| {
        plan.fragments
            .par_iter()
            .map(|fragment| row_values(model, ensemble, fragment, h_s))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let chi: Vec<f64> = samples.iter().map(|s| s.chi).collect();
    let (chi_mean_bits, chi_stderr) = mean_stderr(&chi, plan.monte_carlo);
    /* A bound column is reported only when every sampled fragment produced
     * it; averaging a feasible subsample would bias the column. */
    let column = |get: fn(&RowValues) -> Option<f64>| -> Option<f64> {
        let values: Option<Vec<f64>> = samples.iter().map(get).collect();
        values.map(|v| mean_stderr(&v, plan.monte_carlo).0)
    };
    Ok(ReportRow {
        m,
        chi_mean_bits,
        chi_stderr,
        i_mean_bits: column(|s| s.mi),
        pe_mean: column(|s| s.pe),
        fano_lb_bits: column(|s| s.fano),
        fid_ub_bits: column(|s| s.fid),
    })
}

fn chi_at(
    cache: &mut BTreeMap<usize, (f64, f64)>,
    model: &DecoherenceModel,
    ensemble: &BranchEnsemble,
    m: usize,
    sampler: &FragmentSampler,
) -> Result<(f64, f64), InfoError> {
    if let Some(&hit) = cache.get(&m) {
        return Ok(hit);
    }
    let value = fragment_average_with(model, ensemble, m, FragmentMetric::HolevoBits, sampler)?;
    cache.insert(m, value);
    Ok(value)
}

/// Redundancy of the pointer record in the environment at time `t`.
///
/// Finds the smallest fragment size m_δ whose average Holevo information
/// reaches (1−δ)·H_S, by doubling until the threshold is bracketed and then
/// scanning the bracket upward, and reports R_δ = ♯ℰ/m_δ together with a
/// per-size table. If even the full environment falls short, the status is
/// "insufficient information" and R_δ = 0. Small environments (♯ℰ ≤ 32) get
/// a complete per-size table; larger ones tabulate the sizes the search
/// visited. Models without a closed-form χ path are limited by the dense
/// fragment cap, so very large fragment sizes can make the search fail with
/// a resource error.
pub fn redundancy(
    model: &DecoherenceModel,
    t: f64,
    delta: f64,
    sampler: &FragmentSampler,
) -> Result<InformationReport, InfoError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(InfoError::DeltaOutOfRange(delta));
    }
    if sampler.environment_size() != model.environment_size() {
        return Err(InfoError::SamplerSizeMismatch {
            sampler: sampler.environment_size(),
            model: model.environment_size(),
        });
    }
    let n = model.environment_size();
    let h_s = model.pointer().pointer_entropy_bits();
    let target = (1.0 - delta) * h_s;
    let ensemble = model.branch_ensemble(t)?;

    let mut cache: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    cache.insert(0, (0.0, 0.0));

    /* Threshold search over m ∈ [1, ♯ℰ]. */
    let mut m_delta: Option<usize> = None;
    if chi_at(&mut cache, model, &ensemble, 1, sampler)?.0 >= target {
        m_delta = Some(1);
    } else {
        let mut lo = 1usize;
        loop {
            let hi = (lo * 2).min(n);
            let passed = chi_at(&mut cache, model, &ensemble, hi, sampler)?.0 >= target;
            if passed {
                let mut found = hi;
                for m in (lo + 1)..hi {
                    if chi_at(&mut cache, model, &ensemble, m, sampler)?.0 >= target {
                        found = m;
                        break;
                    }
                }
                m_delta = Some(found);
                break;
            }
            if hi == n {
                break;
            }
            lo = hi;
        }
    }

    let (redundancy, status) = match m_delta {
        Some(md) => (n as f64 / md as f64, RedundancyStatus::Achieved),
        None => (0.0, RedundancyStatus::InsufficientInformation),
    };

    let interpolated_m = m_delta.and_then(|md| {
        let below = cache.get(&(md - 1)).copied()?.0;
        let above = cache.get(&md).copied()?.0;
        let gap = above - below;
        if gap <= 0.0 {
            return None;
        }
        Some(((md - 1) as f64 + (target - below) / gap).clamp((md - 1) as f64, md as f64))
    });

    let mut row_sizes: BTreeSet<usize> = cache.keys().copied().collect();
    if n <= 32 {
        row_sizes.extend(0..=n);
    }
    let rows = row_sizes
        .into_iter()
        .map(|m| evaluate_row(model, &ensemble, m, sampler, h_s))
        .collect::<Result<Vec<_>, _>>()?;

    Ok(InformationReport {
        time: t,
        environment_size: n,
        h_s_bits: h_s,
        delta,
        target_bits: target,
        rows,
        m_delta,
        redundancy,
        status,
        interpolated_m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{random_two_level_model, PointerSpec, SubsystemSpec};
    use ndarray::array;
    use rand::SeedableRng;

    fn plus_state() -> DensityMatrix {
        let h = C64::new(0.5, 0.0);
        DensityMatrix::new(array![[h, h], [h, h]]).unwrap()
    }

    fn sigma_z() -> ComplexMatrix {
        array![
            [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
            [C64::new(0.0, 0.0), C64::new(-1.0, 0.0)]
        ]
    }

    /// Template environment of qubits in |+⟩ coupled through σ^z with
    /// pointer eigenvalues ±1/2: per-subsystem overlap λ(t) = cos t.
    fn cosine_model(n: usize) -> DecoherenceModel {
        let pointer = PointerSpec::qubit_superposition(0.5, 0.0).unwrap();
        let template =
            SubsystemSpec::new(plus_state(), sigma_z(), Array2::zeros((2, 2))).unwrap();
        DecoherenceModel::new_iid(pointer, template, n).unwrap()
    }

    fn equal_priors() -> [f64; 2] {
        [0.5, 0.5]
    }

    #[test]
    fn binary_entropy_frozen_values() {
        assert!((binary_entropy_bits(0.5) - 1.0).abs() <= 1e-15);
        assert_eq!(binary_entropy_bits(0.0), 0.0);
        assert_eq!(binary_entropy_bits(1.0), 0.0);
        assert!((binary_entropy_bits(0.2) - 0.721_928_094_887_362_3).abs() <= 1e-15);
    }

    #[test]
    fn mixture_eigenvalue_examples() {
        let (p, m) = mixture_eigenvalues(0.5, 0.5, 0.6);
        assert!((p - 0.8).abs() <= 1e-15);
        assert!((m - 0.2).abs() <= 1e-15);
        assert_eq!(p + m, 1.0);

        /* Full overlap: no information, spectrum (1, 0). */
        assert_eq!(mixture_eigenvalues(0.3, 0.7, 1.0), (1.0, 0.0));
        /* Orthogonal equal mixture: (1/2, 1/2) exactly. */
        assert_eq!(mixture_eigenvalues(0.5, 0.5, 0.0), (0.5, 0.5));
    }

    #[test]
    fn small_root_keeps_precision_where_naive_form_underflows() {
        /* x = 4·(1/4)·0.36⁴⁰ ≈ 1.8e-18: the naive (1−√(1−x))/2 evaluates to
         * exactly 0 here, which would make every −ln P_e pipeline blow up. */
        let x = 0.36f64.powi(40);
        let root = stable_small_root(x);
        assert!(root > 0.0);
        let ratio = root / (x / 4.0);
        assert!((ratio - 1.0).abs() <= 1e-11, "{ratio}");
    }

    #[test]
    fn holevo_dense_examples() {
        let model = cosine_model(3);
        let priors = equal_priors();
        let frag = Fragment::leading(1, 3).unwrap();

        let ensemble = model.branch_ensemble(0.0).unwrap();
        assert!(holevo_dense(&ensemble, &frag, &priors).unwrap() <= 1e-12);

        let ensemble = model.branch_ensemble(std::f64::consts::FRAC_PI_2).unwrap();
        let chi = holevo_dense(&ensemble, &frag, &priors).unwrap();
        assert!((chi - 1.0).abs() <= 1e-10, "{chi}");

        let ensemble = model.branch_ensemble(0.6f64.acos()).unwrap();
        let chi = holevo_dense(&ensemble, &frag, &priors).unwrap();
        assert!((chi - 0.721_928_094_887_362_3).abs() <= 1e-10, "{chi}");
    }

    #[test]
    fn holevo_closed_form_matches_dense_on_random_pure_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        for _ in 0..5 {
            let model = random_two_level_model(6, 2, true, &mut rng);
            let priors = model.pointer().probabilities().to_vec();
            for &t in &[0.3, 0.9] {
                let ensemble = model.branch_ensemble(t).unwrap();
                for m in 0..=3 {
                    for indices in (0..6).combinations(m) {
                        let frag = Fragment::new(indices, 6).unwrap();
                        let closed = holevo_pure_branches(&ensemble, &frag, &priors).unwrap();
                        let dense = holevo_dense(&ensemble, &frag, &priors).unwrap();
                        assert!((closed - dense).abs() <= 1e-9, "m={m}: {closed} vs {dense}");
                    }
                }
            }
        }
    }

    #[test]
    fn holevo_closed_form_rejects_mixed_branches() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let model = random_two_level_model(3, 2, false, &mut rng);
        let ensemble = model.branch_ensemble(0.5).unwrap();
        let frag = Fragment::leading(2, 3).unwrap();
        let err = holevo_pure_branches(&ensemble, &frag, model.pointer().probabilities())
            .unwrap_err();
        assert!(err.to_string().contains("holevo_dense"), "{err}");
    }

    #[test]
    fn holevo_closed_form_far_beyond_dense_reach() {
        /* 200 subsystems with per-subsystem overlap 0.99: |Λ| = 0.99²⁰⁰ and
         * χ = H_bin((1−|Λ|)/2). */
        let model = cosine_model(200);
        let ensemble = model.branch_ensemble(0.99f64.acos()).unwrap();
        let frag = Fragment::full(200);
        let chi = holevo_pure_branches(&ensemble, &frag, &equal_priors()).unwrap();
        assert!((chi - 0.987_012_392_993_981_7).abs() <= 1e-12, "{chi}");

        /* Same |Λ| squeezed into 8 subsystems (overlap 0.99²⁵ each) stays
         * inside the dense cap; both paths must agree there. */
        let model = cosine_model(8);
        let ensemble = model.branch_ensemble(0.99f64.powi(25).acos()).unwrap();
        let frag = Fragment::full(8);
        let dense = holevo_dense(&ensemble, &frag, &equal_priors()).unwrap();
        assert!((dense - 0.987_012_392_993_981_7).abs() <= 1e-9, "{dense}");
    }

    #[test]
    fn mutual_information_examples() {
        let model = cosine_model(4);
        let frag = Fragment::leading(2, 4).unwrap();
        assert!(mutual_information(&model, &frag, 0.0).unwrap() <= 1e-9);

        /* Full interception of a fully decohered, globally pure model:
         * I(S:ℰ) = 2 H_S = 2 bits, on both paths. */
        let t = std::f64::consts::FRAC_PI_2;
        let full = Fragment::full(4);
        let closed = mutual_information(&model, &full, t).unwrap();
        assert!((closed - 2.0).abs() <= 1e-12, "{closed}");
        let ensemble = model.branch_ensemble(t).unwrap();
        let dense = mutual_information_dense(&model, &ensemble, &full).unwrap();
        assert!((dense - 2.0).abs() <= 1e-9, "{dense}");
    }

    #[test]
    fn mutual_information_closed_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        for _ in 0..4 {
            let model = random_two_level_model(6, 2, true, &mut rng);
            let ensemble = model.branch_ensemble(0.8).unwrap();
            for m in 1..=3 {
                for indices in (0..6).combinations(m) {
                    let frag = Fragment::new(indices, 6).unwrap();
                    let closed = mutual_information_closed(&model, &ensemble, &frag).unwrap();
                    let dense = mutual_information_dense(&model, &ensemble, &frag).unwrap();
                    assert!((closed - dense).abs() <= 1e-9, "m={m}: {closed} vs {dense}");
                }
            }
        }
    }

    #[test]
    fn mutual_information_dominates_holevo() {
        let mut rng = ChaCha8Rng::seed_from_u64(54);
        for &pure in &[true, false] {
            let model = random_two_level_model(5, 2, pure, &mut rng);
            let priors = model.pointer().probabilities().to_vec();
            let ensemble = model.branch_ensemble(0.7).unwrap();
            for m in 0..=3 {
                for indices in (0..5).combinations(m) {
                    let frag = Fragment::new(indices, 5).unwrap();
                    let chi = holevo_bits(&ensemble, &frag, &priors).unwrap();
                    let mi =
                        mutual_information_from(&model, &ensemble, &frag, DENSE_DIM_CAP).unwrap();
                    assert!(mi + 1e-9 >= chi, "m={m}: I={mi} < chi={chi}");
                }
            }
        }
    }

    #[test]
    fn mutual_information_resource_error_names_dimensions() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let model = random_two_level_model(14, 2, false, &mut rng);
        let frag = Fragment::leading(13, 14).unwrap();
        let err = mutual_information(&model, &frag, 0.4).unwrap_err();
        match err {
            InfoError::DenseCapExceeded { dim, cap } => {
                assert_eq!(dim, 1 << 14);
                assert_eq!(cap, DENSE_DIM_CAP);
            }
            other => panic!("expected a dense-cap error, got {other}"),
        }
    }

    #[test]
    fn helstrom_examples_and_path_agreement() {
        let model = cosine_model(3);
        let priors = equal_priors();
        let frag = Fragment::leading(1, 3).unwrap();

        let ensemble = model.branch_ensemble(0.0).unwrap();
        assert!((helstrom_error(&ensemble, &frag, &priors).unwrap() - 0.5).abs() <= 1e-12);

        let ensemble = model.branch_ensemble(std::f64::consts::FRAC_PI_2).unwrap();
        assert!(helstrom_error(&ensemble, &frag, &priors).unwrap() <= 1e-12);

        let ensemble = model.branch_ensemble(0.6f64.acos()).unwrap();
        let pe = helstrom_error(&ensemble, &frag, &priors).unwrap();
        assert!((pe - 0.1).abs() <= 1e-12, "{pe}");
        let dense = helstrom_dense(&ensemble, &frag, &priors, FRAGMENT_DENSE_CAP).unwrap();
        assert!((pe - dense).abs() <= 1e-10, "{pe} vs {dense}");

        /* Unequal priors, both paths. */
        let skew = [0.7, 0.3];
        let analytic = helstrom_error(&ensemble, &frag, &skew).unwrap();
        let dense = helstrom_dense(&ensemble, &frag, &skew, FRAGMENT_DENSE_CAP).unwrap();
        assert!((analytic - dense).abs() <= 1e-10, "{analytic} vs {dense}");
    }

    #[test]
    fn helstrom_survives_deep_exponential_decay() {
        /* 40 subsystems of overlap 0.6: P_e ≈ 0.36⁴⁰/4 ≈ 4e-19 must come out
         * positive and accurate, not rounded to zero. */
        let model = cosine_model(40);
        let ensemble = model.branch_ensemble(0.6f64.acos()).unwrap();
        let frag = Fragment::full(40);
        let pe = helstrom_error(&ensemble, &frag, &equal_priors()).unwrap();
        assert!(pe > 0.0 && pe < 1e-18, "{pe}");
        let ratio = pe / (0.36f64.powi(40) / 4.0);
        assert!((ratio - 1.0).abs() <= 1e-11, "{ratio}");
    }

    #[test]
    fn pe_star_examples_and_grid_domination() {
        let model = cosine_model(5);
        let priors = equal_priors();
        let t = 0.6f64.acos();
        let ensemble = model.branch_ensemble(t).unwrap();

        let empty = Fragment::empty();
        assert!((pe_star_bound(&ensemble, &empty, &priors, 0.5).unwrap() - 0.5).abs() <= 1e-15);

        for m in 1..=5 {
            let frag = Fragment::leading(m, 5).unwrap();
            let star = pe_star_bound(&ensemble, &frag, &priors, 0.5).unwrap();
            let expected = 0.5 * 0.36f64.powi(m as i32);
            assert!((star / expected - 1.0).abs() <= 1e-12, "m={m}: {star}");
        }

        /* P_e ≤ P_e*(c) across the exponent grid on random models. */
        let mut rng = ChaCha8Rng::seed_from_u64(56);
        for &pure in &[true, false] {
            let model = random_two_level_model(4, 2, pure, &mut rng);
            let priors = model.pointer().probabilities().to_vec();
            let ensemble = model.branch_ensemble(0.9).unwrap();
            for m in 0..=2 {
                for indices in (0..4).combinations(m) {
                    let frag = Fragment::new(indices, 4).unwrap();
                    let pe = helstrom_error(&ensemble, &frag, &priors).unwrap();
                    for i in 1..=9 {
                        let c = i as f64 / 10.0;
                        let star = pe_star_bound(&ensemble, &frag, &priors, c).unwrap();
                        assert!(pe <= star + 1e-10, "c={c}: {pe} > {star}");
                    }
                }
            }
        }
    }

    #[test]
    fn binary_entropy_of_pe_is_below_its_linearization() {
        /* H_bin(P) ≤ P/ln2 − P log₂ P on (0, 1/2], equivalently
         * 0 ≤ P + (1−P)ln(1−P). */
        for i in 1..=500 {
            let p = 0.5 * i as f64 / 500.0;
            let rhs = p / std::f64::consts::LN_2 - p * p.log2();
            assert!(binary_entropy_bits(p) <= rhs + 1e-12, "p={p}");
        }
        for &p in &[1e-12, 1e-9, 1e-6, 1e-3] {
            let rhs = p / std::f64::consts::LN_2 - p * p.log2();
            assert!(binary_entropy_bits(p) <= rhs + 1e-12, "p={p}");
        }
    }

    #[test]
    fn fano_bound_examples_and_range_checks() {
        assert!((fano_lower_bound(0.0, 0.9).unwrap() - 0.9).abs() <= 1e-15);
        assert!(fano_lower_bound(0.5, 1.0).unwrap() <= 1e-15);
        let v = fano_lower_bound(0.1, 1.0).unwrap();
        assert!((v - 0.531_004_406_410_718_8).abs() <= 1e-15, "{v}");
        assert!(matches!(fano_lower_bound(-0.01, 1.0), Err(InfoError::PeOutOfRange(_))));
        assert!(matches!(fano_lower_bound(0.51, 1.0), Err(InfoError::PeOutOfRange(_))));
    }

    #[test]
    fn fidelity_bound_examples_and_priors_refusal() {
        let model = cosine_model(3);
        let priors = equal_priors();
        let frag = Fragment::leading(1, 3).unwrap();

        let ensemble = model.branch_ensemble(0.0).unwrap();
        assert!(fidelity_upper_bound(&ensemble, &frag, &priors).unwrap() <= 1e-12);

        let ensemble = model.branch_ensemble(std::f64::consts::FRAC_PI_2).unwrap();
        let ub = fidelity_upper_bound(&ensemble, &frag, &priors).unwrap();
        assert!((ub - 1.0).abs() <= 1e-12);

        let ensemble = model.branch_ensemble(0.6f64.acos()).unwrap();
        let ub = fidelity_upper_bound(&ensemble, &frag, &priors).unwrap();
        let chi = holevo_pure_branches(&ensemble, &frag, &priors).unwrap();
        assert!((ub - chi).abs() <= 1e-12, "pure branches: equality, got {ub} vs {chi}");
        let dense = fidelity_dense(&ensemble, &frag, FRAGMENT_DENSE_CAP).unwrap().sqrt();
        assert!((dense - 0.6).abs() <= 1e-9, "{dense}");

        let err = fidelity_upper_bound(&ensemble, &frag, &[0.7, 0.3]).unwrap_err();
        assert!(matches!(err, InfoError::UnsupportedPath { .. }));
    }

    #[test]
    fn bound_chain_on_random_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(57);
        for &pure in &[true, false, true, false, true, false] {
            let model = random_two_level_model(5, 2, pure, &mut rng);
            let priors = model.pointer().probabilities().to_vec();
            let h_s = model.pointer().pointer_entropy_bits();
            for &t in &[0.4, 1.2] {
                let ensemble = model.branch_ensemble(t).unwrap();
                for m in 0..=2 {
                    for indices in (0..5).combinations(m) {
                        let frag = Fragment::new(indices, 5).unwrap();
                        let chi = holevo_bits(&ensemble, &frag, &priors).unwrap();
                        let pe = helstrom_error(&ensemble, &frag, &priors).unwrap();
                        let fano = fano_lower_bound(pe, h_s).unwrap();
                        let mi = mutual_information_from(&model, &ensemble, &frag, DENSE_DIM_CAP)
                            .unwrap();
                        assert!(fano <= chi + 1e-9, "fano={fano} chi={chi}");
                        assert!(chi <= mi + 1e-9, "chi={chi} mi={mi}");
                    }
                }
            }
        }

        /* The fidelity leg needs equal priors. */
        let pointer = PointerSpec::qubit_superposition(0.5, 0.4).unwrap();
        let specs = (0..4)
            .map(|_| {
                SubsystemSpec::new(
                    crate::linalg::random_pure_state(2, &mut rng),
                    crate::linalg::random_hermitian(2, &mut rng),
                    crate::linalg::random_hermitian(2, &mut rng),
                )
                .unwrap()
            })
            .collect();
        let model = DecoherenceModel::new_explicit(pointer, specs).unwrap();
        let priors = model.pointer().probabilities().to_vec();
        let ensemble = model.branch_ensemble(0.8).unwrap();
        for m in 0..=3 {
            for indices in (0..4).combinations(m) {
                let frag = Fragment::new(indices, 4).unwrap();
                let chi = holevo_bits(&ensemble, &frag, &priors).unwrap();
                let ub = fidelity_upper_bound(&ensemble, &frag, &priors).unwrap();
                assert!(chi <= ub + 1e-9, "chi={chi} ub={ub}");
            }
        }
    }

    #[test]
    fn fragment_average_boundary_sizes_have_zero_stderr() {
        let model = cosine_model(5);
        let sampler = FragmentSampler::monte_carlo(9, 100, 5).unwrap();
        let t = 0.7;
        let (mean, se) =
            fragment_average(&model, t, 0, FragmentMetric::HolevoBits, &sampler).unwrap();
        assert_eq!(mean, 0.0);
        assert_eq!(se, 0.0);
        let (mean, se) =
            fragment_average(&model, t, 5, FragmentMetric::HolevoBits, &sampler).unwrap();
        assert!(mean > 0.0);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn monte_carlo_mean_tracks_exhaustive_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(58);
        let model = random_two_level_model(8, 2, true, &mut rng);
        let t = 0.8;
        let exhaustive = FragmentSampler::exhaustive(1, 8);
        let (full_mean, zero) =
            fragment_average(&model, t, 3, FragmentMetric::HolevoBits, &exhaustive).unwrap();
        assert_eq!(zero, 0.0);

        let mc = FragmentSampler::monte_carlo(123, 400, 8).unwrap();
        let (mc_mean, mc_se) =
            fragment_average(&model, t, 3, FragmentMetric::HolevoBits, &mc).unwrap();
        assert!(mc_se > 0.0);
        assert!(
            (mc_mean - full_mean).abs() <= 3.0 * mc_se,
            "MC {mc_mean} vs exhaustive {full_mean}, se {mc_se}"
        );
    }

    #[test]
    fn exhaustive_cap_error_points_to_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        let model = random_two_level_model(40, 2, true, &mut rng);
        let sampler = FragmentSampler::exhaustive(1, 40);
        let err = fragment_average(&model, 0.5, 20, FragmentMetric::HolevoBits, &sampler)
            .unwrap_err();
        assert!(matches!(err, InfoError::ExhaustiveCapExceeded { .. }));
        assert!(err.to_string().contains("Monte Carlo"), "{err}");
    }

    #[test]
    fn monte_carlo_averages_are_bitwise_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let model = random_two_level_model(10, 2, false, &mut rng);
        let sampler = FragmentSampler::monte_carlo(77, 64, 10).unwrap();
        let first =
            fragment_average(&model, 1.1, 4, FragmentMetric::HolevoBits, &sampler).unwrap();
        let second =
            fragment_average(&model, 1.1, 4, FragmentMetric::HolevoBits, &sampler).unwrap();
        assert_eq!(first.0.to_bits(), second.0.to_bits());
        assert_eq!(first.1.to_bits(), second.1.to_bits());
    }

    #[test]
    fn uniform_list_and_template_models_agree_bitwise() {
        let pointer = PointerSpec::qubit_superposition(0.5, 0.0).unwrap();
        let spec = || SubsystemSpec::new(plus_state(), sigma_z(), Array2::zeros((2, 2))).unwrap();
        let explicit =
            DecoherenceModel::new_explicit(pointer.clone(), (0..6).map(|_| spec()).collect())
                .unwrap();
        let template = DecoherenceModel::new_iid(pointer, spec(), 6).unwrap();
        let sampler = FragmentSampler::monte_carlo(5, 50, 6).unwrap();
        let a = fragment_average(&explicit, 0.9, 3, FragmentMetric::HolevoBits, &sampler).unwrap();
        let b = fragment_average(&template, 0.9, 3, FragmentMetric::HolevoBits, &sampler).unwrap();
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert_eq!(a.1.to_bits(), b.1.to_bits());
    }

    #[test]
    fn redundancy_threshold_oracle() {
        /* Per-subsystem overlap cos(π/6) ≈ 0.8660 at δ = 0.1 needs
         * H_bin((1 − 0.8660^m)/2) ≥ 0.9: m = 6 gives 0.8675 (fail), m = 7
         * gives 0.9014 (pass). */
        let model = cosine_model(20);
        let sampler = FragmentSampler::exhaustive(3, 20);
        let report =
            redundancy(&model, std::f64::consts::FRAC_PI_6, 0.1, &sampler).unwrap();
        assert_eq!(report.m_delta, Some(7));
        assert!((report.redundancy - 20.0 / 7.0).abs() <= 1e-12);
        assert_eq!(report.status, RedundancyStatus::Achieved);
        let interp = report.interpolated_m.unwrap();
        assert!(interp > 6.0 && interp < 7.0, "{interp}");

        /* Small environment: every size is tabulated, and each row respects
         * the bound chain. */
        assert_eq!(report.rows.len(), 21);
        for row in &report.rows {
            assert!(row.chi_mean_bits >= -1e-12 && row.chi_mean_bits <= 1.0 + 1e-12);
            assert_eq!(row.chi_stderr, 0.0);
            let mi = row.i_mean_bits.expect("globally pure model: I closed form");
            assert!(mi + 1e-8 >= row.chi_mean_bits);
            let fano = row.fano_lb_bits.expect("pure branches: analytic error");
            assert!(fano <= row.chi_mean_bits + 1e-8);
            let fid = row.fid_ub_bits.expect("equal priors");
            assert!(row.chi_mean_bits <= fid + 1e-8);
        }
    }

    #[test]
    fn redundancy_without_records_reports_insufficient_information() {
        let model = cosine_model(6);
        let sampler = FragmentSampler::exhaustive(3, 6);
        let report = redundancy(&model, 0.0, 0.1, &sampler).unwrap();
        assert_eq!(report.m_delta, None);
        assert_eq!(report.redundancy, 0.0);
        assert_eq!(report.status, RedundancyStatus::InsufficientInformation);
        assert_eq!(report.status.to_string(), "insufficient information");
        assert_eq!(report.interpolated_m, None);
    }

    #[test]
    fn redundancy_saturates_at_single_subsystem_fragments() {
        let model = cosine_model(9);
        let sampler = FragmentSampler::exhaustive(3, 9);
        let report =
            redundancy(&model, std::f64::consts::FRAC_PI_2, 0.1, &sampler).unwrap();
        assert_eq!(report.m_delta, Some(1));
        assert!((report.redundancy - 9.0).abs() <= 1e-12);
    }

    #[test]
    fn redundancy_rejects_bad_delta() {
        let model = cosine_model(4);
        let sampler = FragmentSampler::exhaustive(3, 4);
        for &delta in &[0.0, 1.0, -0.1, 1.5] {
            assert!(matches!(
                redundancy(&model, 0.5, delta, &sampler),
                Err(InfoError::DeltaOutOfRange(_))
            ));
        }
    }

    #[test]
    fn sampler_input_validation() {
        assert!(matches!(
            FragmentSampler::monte_carlo(1, 0, 8),
            Err(InfoError::ZeroSampleCount)
        ));
        let model = cosine_model(10);
        let sampler = FragmentSampler::exhaustive(1, 8);
        assert!(matches!(
            fragment_average(&model, 0.5, 2, FragmentMetric::HolevoBits, &sampler),
            Err(InfoError::SamplerSizeMismatch { sampler: 8, model: 10 })
        ));
        assert!(matches!(
            fragment_average(
                &model,
                0.5,
                11,
                FragmentMetric::HolevoBits,
                &FragmentSampler::exhaustive(1, 10)
            ),
            Err(InfoError::FragmentSizeOutOfRange { m: 11, environment: 10 })
        ));
    }
}
