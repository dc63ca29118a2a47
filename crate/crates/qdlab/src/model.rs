//! Pure-decoherence models: a small system coupled to many non-interacting
//! environment subsystems through a conserved system observable.
//!
//! The Hamiltonian is `H = H_S + P_S ⊗ Σ_k Y_k + Σ_k W_k`, where `P_S` is the
//! pointer observable (diagonal in the pointer basis with eigenvalues π_ŝ),
//! `Y_k` couples subsystem `k` to the system, and `W_k` is the subsystem
//! self-Hamiltonian. Because `[P_S, H_S] = 0`, each pointer branch ŝ evolves
//! the environment under its own Hermitian generator `π_ŝ Y_k + W_k`, and all
//! dynamics reduce to per-subsystem conditional propagators. Time and energy
//! are reciprocal dimensionless units (ħ = 1).

use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::linalg::{
    self, hermitian_eigenvalues, hermitian_spectrum, hermiticity_deviation, matmul,
    tensor_product_capped, ComplexMatrix, DensityMatrix, LinalgError, DEFAULT_TOLERANCES,
    DENSE_DIM_CAP,
};
use crate::threads;

/// Pointer probabilities must sum to one within this tolerance; they are the
/// diagonal of a validated density matrix, so only rounding noise is allowed.
pub const PROBABILITY_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("pointer dimension must be at least 2, got {0}")]
    PointerTooSmall(usize),
    #[error("pointer field `{field}` has length {got}, expected {expected}")]
    PointerFieldLength {
        field: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("pointer probabilities sum to {sum:.17}, expected 1 within {tolerance:.1e}")]
    ProbabilitySum { sum: f64, tolerance: f64 },
    #[error("pointer probability {value:.3e} at index {index} is negative")]
    NegativeProbability { index: usize, value: f64 },
    #[error("subsystem operator is {rows}x{cols}, expected {expected}x{expected}")]
    SubsystemShape {
        expected: usize,
        rows: usize,
        cols: usize,
    },
    #[error("subsystem operator contains a non-finite entry")]
    NonFinite,
    #[error("model needs at least one environment subsystem")]
    EmptyEnvironment,
    #[error("time must be finite, got {0}")]
    NonFiniteTime(f64),
    #[error("fragment index {index} out of range for environment of size {size}")]
    FragmentIndexOutOfRange { index: usize, size: usize },
    #[error("fragment index {index} repeated")]
    DuplicateFragmentIndex { index: usize },
    #[error("pointer index {index} out of range for system dimension {dim}")]
    PointerIndexOutOfRange { index: usize, dim: usize },
    #[error("subsystem index {index} out of range for environment of size {size}")]
    SubsystemIndexOutOfRange { index: usize, size: usize },
    #[error(
        "joint system-fragment dimension {dim} exceeds the dense cap {cap}; \
         for pure product environments use the closed-form fragment metrics \
         instead of the dense joint state"
    )]
    JointDimensionTooLarge { dim: usize, cap: usize },
}

/// System side of a pure-decoherence model: pointer eigenvalues π_ŝ, the
/// per-branch phases ω_ŝ contributed by the system self-Hamiltonian, and the
/// initial system state written in the pointer basis. The branch
/// probabilities p_ŝ are the diagonal of that state and are conserved by the
/// dynamics.
#[derive(Debug, Clone)]
pub struct PointerSpec {
    pointer_eigenvalues: Vec<f64>,
    system_phases: Vec<f64>,
    initial_state: DensityMatrix,
    probabilities: Vec<f64>,
}

impl PointerSpec {
    pub fn new(
        pointer_eigenvalues: Vec<f64>,
        system_phases: Vec<f64>,
        initial_state: DensityMatrix,
    ) -> Result<Self, ModelError> {
        let dim = initial_state.dim();
        if dim < 2 {
            return Err(ModelError::PointerTooSmall(dim));
        }
        if pointer_eigenvalues.len() != dim {
            return Err(ModelError::PointerFieldLength {
                field: "pointer_eigenvalues",
                expected: dim,
                got: pointer_eigenvalues.len(),
            });
        }
        if system_phases.len() != dim {
            return Err(ModelError::PointerFieldLength {
                field: "system_phases",
                expected: dim,
                got: system_phases.len(),
            });
        }
        if pointer_eigenvalues
            .iter()
            .chain(system_phases.iter())
            .any(|x| !x.is_finite())
        {
            return Err(ModelError::NonFinite);
        }
        let probabilities: Vec<f64> = (0..dim).map(|s| initial_state.matrix()[(s, s)].re).collect();
        for (index, &p) in probabilities.iter().enumerate() {
            if p < -PROBABILITY_SUM_TOL {
                return Err(ModelError::NegativeProbability { index, value: p });
            }
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > PROBABILITY_SUM_TOL {
            return Err(ModelError::ProbabilitySum {
                sum,
                tolerance: PROBABILITY_SUM_TOL,
            });
        }
        Ok(PointerSpec {
            pointer_eigenvalues,
            system_phases,
            initial_state,
            probabilities,
        })
    }

    /// Two-level system in the pure superposition √p₁|1⟩ + e^{iφ}√p₂|2⟩ with
    /// pointer eigenvalues ±1/2 and no self-Hamiltonian phases.
    pub fn qubit_superposition(p1: f64, phase: f64) -> Result<Self, ModelError> {
        assert!((0.0..=1.0).contains(&p1), "p1 must lie in [0, 1]");
        let a = C64::new(p1.sqrt(), 0.0);
        let b = C64::from_polar((1.0 - p1).sqrt(), phase);
        let amps = [a, b];
        let mut mat = Array2::zeros((2, 2));
        for i in 0..2 {
            for j in 0..2 {
                mat[(i, j)] = amps[i] * amps[j].conj();
            }
        }
        PointerSpec::new(vec![0.5, -0.5], vec![0.0, 0.0], DensityMatrix::new(mat)?)
    }

    pub fn dim(&self) -> usize {
        self.probabilities.len()
    }

    pub fn pointer_eigenvalues(&self) -> &[f64] {
        &self.pointer_eigenvalues
    }

    pub fn system_phases(&self) -> &[f64] {
        &self.system_phases
    }

    pub fn initial_state(&self) -> &DensityMatrix {
        &self.initial_state
    }

    /// Branch probabilities p_ŝ (diagonal of the initial system state).
    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// Shannon entropy of the branch probabilities in bits: H_S = −Σ p log₂ p.
    pub fn pointer_entropy_bits(&self) -> f64 {
        linalg::entropy_of_eigenvalues(&self.probabilities, DEFAULT_TOLERANCES.clip)
    }
}

/// One environment subsystem: its initial state ρ_k(0), the coupling operator
/// Y_k, and the self-Hamiltonian W_k. Hermiticity of the operators is checked
/// by [`validate_model`], not here, so malformed inputs stay representable and
/// show up as report entries.
#[derive(Debug, Clone)]
pub struct SubsystemSpec {
    initial_state: DensityMatrix,
    interaction: ComplexMatrix,
    self_hamiltonian: ComplexMatrix,
}

impl SubsystemSpec {
    pub fn new(
        initial_state: DensityMatrix,
        interaction: ComplexMatrix,
        self_hamiltonian: ComplexMatrix,
    ) -> Result<Self, ModelError> {
        let d = initial_state.dim();
        for op in [&interaction, &self_hamiltonian] {
            if op.nrows() != d || op.ncols() != d {
                return Err(ModelError::SubsystemShape {
                    expected: d,
                    rows: op.nrows(),
                    cols: op.ncols(),
                });
            }
            if op.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(ModelError::NonFinite);
            }
        }
        Ok(SubsystemSpec {
            initial_state,
            interaction,
            self_hamiltonian,
        })
    }

    pub fn dim(&self) -> usize {
        self.initial_state.dim()
    }

    pub fn initial_state(&self) -> &DensityMatrix {
        &self.initial_state
    }

    pub fn interaction(&self) -> &ComplexMatrix {
        &self.interaction
    }

    pub fn self_hamiltonian(&self) -> &ComplexMatrix {
        &self.self_hamiltonian
    }
}

#[derive(Debug, Clone)]
enum Subsystems {
    Explicit(Vec<Arc<SubsystemSpec>>),
    Iid {
        template: Arc<SubsystemSpec>,
        count: usize,
    },
}

/// A full model: the system pointer data plus the environment, stored either
/// as an explicit subsystem list or as one template replicated ♯ℰ times.
#[derive(Debug, Clone)]
pub struct DecoherenceModel {
    pointer: PointerSpec,
    subsystems: Subsystems,
    /* True when every entry of an explicit list is bitwise identical to the
     * first; such models take the same code path as template models so the
     * two representations produce bitwise-equal metrics. */
    uniform: bool,
    pure_branches: bool,
}

/* Bitwise matrix comparison used for the uniform-list fast path. Exact bit
 * equality (not approximate) is required: only then is "compute once and
 * replicate" indistinguishable from "compute each entry". */
fn bitwise_equal(a: &ComplexMatrix, b: &ComplexMatrix) -> bool {
    a.shape() == b.shape()
        && a.iter()
            .zip(b.iter())
            .all(|(x, y)| x.re.to_bits() == y.re.to_bits() && x.im.to_bits() == y.im.to_bits())
}

fn specs_bitwise_equal(a: &SubsystemSpec, b: &SubsystemSpec) -> bool {
    bitwise_equal(a.initial_state.matrix(), b.initial_state.matrix())
        && bitwise_equal(&a.interaction, &b.interaction)
        && bitwise_equal(&a.self_hamiltonian, &b.self_hamiltonian)
}

impl DecoherenceModel {
    pub fn new_explicit(
        pointer: PointerSpec,
        subsystems: Vec<SubsystemSpec>,
    ) -> Result<Self, ModelError> {
        if subsystems.is_empty() {
            return Err(ModelError::EmptyEnvironment);
        }
        let subsystems: Vec<Arc<SubsystemSpec>> = subsystems.into_iter().map(Arc::new).collect();
        let uniform = subsystems[1..]
            .iter()
            .all(|s| specs_bitwise_equal(s, &subsystems[0]));
        let pure_branches = if uniform {
            subsystems[0].initial_state.is_pure(&DEFAULT_TOLERANCES)
        } else {
            subsystems
                .iter()
                .all(|s| s.initial_state.is_pure(&DEFAULT_TOLERANCES))
        };
        Ok(DecoherenceModel {
            pointer,
            subsystems: Subsystems::Explicit(subsystems),
            uniform,
            pure_branches,
        })
    }

    /// ♯ℰ independent copies of one subsystem. Shares the template by
    /// reference, so ♯ℰ can be large without materializing ♯ℰ matrices.
    pub fn new_iid(
        pointer: PointerSpec,
        template: SubsystemSpec,
        count: usize,
    ) -> Result<Self, ModelError> {
        if count == 0 {
            return Err(ModelError::EmptyEnvironment);
        }
        let pure_branches = template.initial_state.is_pure(&DEFAULT_TOLERANCES);
        Ok(DecoherenceModel {
            pointer,
            subsystems: Subsystems::Iid {
                template: Arc::new(template),
                count,
            },
            uniform: true,
            pure_branches,
        })
    }

    pub fn pointer(&self) -> &PointerSpec {
        &self.pointer
    }

    /// Number of environment subsystems ♯ℰ.
    pub fn environment_size(&self) -> usize {
        match &self.subsystems {
            Subsystems::Explicit(list) => list.len(),
            Subsystems::Iid { count, .. } => *count,
        }
    }

    pub fn subsystem(&self, k: usize) -> Result<&SubsystemSpec, ModelError> {
        let size = self.environment_size();
        if k >= size {
            return Err(ModelError::SubsystemIndexOutOfRange { index: k, size });
        }
        Ok(match &self.subsystems {
            Subsystems::Explicit(list) => &list[k],
            Subsystems::Iid { template, .. } => template,
        })
    }

    /// True when all subsystems are bitwise identical (template models and
    /// uniform explicit lists); enables the compute-once replication path.
    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    /// True when every environment initial state is pure; this is what the
    /// closed-form fragment metrics require.
    pub fn pure_branches(&self) -> bool {
        self.pure_branches
    }

    /// True when additionally the system state is pure, so the global state
    /// stays pure for all time.
    pub fn globally_pure(&self) -> bool {
        self.pure_branches && self.pointer.initial_state.is_pure(&DEFAULT_TOLERANCES)
    }

    /// Conditional branch propagator U_k^ŝ(t) = exp(−i t (π_ŝ Y_k + W_k)).
    ///
    /// Computed by Hermitian eigendecomposition of the branch generator, so
    /// the result is unitary to machine precision for any t.
    pub fn conditional_propagator(
        &self,
        k: usize,
        pointer_index: usize,
        t: f64,
    ) -> Result<ComplexMatrix, ModelError> {
        if pointer_index >= self.pointer.dim() {
            return Err(ModelError::PointerIndexOutOfRange {
                index: pointer_index,
                dim: self.pointer.dim(),
            });
        }
        if !t.is_finite() {
            return Err(ModelError::NonFiniteTime(t));
        }
        let spec = self.subsystem(k)?;
        branch_propagator(spec, self.pointer.pointer_eigenvalues[pointer_index], t)
    }

    /// Evolves every subsystem to time `t`, producing the conditional states
    /// and pairwise branch overlaps that all information metrics consume.
    ///
    /// Uniform models evolve one subsystem and replicate it by reference;
    /// explicit lists evolve in parallel and are collected in ascending
    /// subsystem order so the output is deterministic.
    pub fn branch_ensemble(&self, t: f64) -> Result<BranchEnsemble, ModelError> {
        if !t.is_finite() {
            return Err(ModelError::NonFiniteTime(t));
        }
        let pis = &self.pointer.pointer_eigenvalues;
        let branches = match &self.subsystems {
            Subsystems::Iid { template, count } => {
                let branch = Arc::new(evolve_subsystem(template, pis, t)?);
                vec![branch; *count]
            }
            Subsystems::Explicit(list) if self.uniform => {
                let branch = Arc::new(evolve_subsystem(&list[0], pis, t)?);
                vec![branch; list.len()]
            }
            Subsystems::Explicit(list) => threads::install(|| {
                list.par_iter()
                    .map(|spec| evolve_subsystem(spec, pis, t).map(Arc::new))
                    .collect::<Result<Vec<_>, _>>()
            })?,
        };
        Ok(BranchEnsemble {
            time: t,
            pointer_dim: self.pointer.dim(),
            pure_branches: self.pure_branches,
            branches,
        })
    }

    /// Dense joint state of the system and a fragment F at time `t`:
    ///
    /// ρ_SF(t) = Σ_{s,s′} [ρ_S(0)]_{ss′} e^{−i(ω_s−ω_{s′})t} Γ^{ss′}_{ℰ∖F}(t)
    ///           |s⟩⟨s′| ⊗ (⊗_{k∈F} U_k^s ρ_k(0) U_k^{s′}†)
    ///
    /// Off-diagonal blocks carry the decoherence factor of the traced-out
    /// complement; diagonal blocks are branch products. The factor order is
    /// system first, then fragment members in ascending subsystem index, so
    /// `partial_trace` dims are `[D_S, d_{k1}, d_{k2}, …]`.
    pub fn joint_state_dense(
        &self,
        fragment: &Fragment,
        t: f64,
    ) -> Result<DensityMatrix, ModelError> {
        let ensemble = self.branch_ensemble(t)?;
        self.joint_state_with_ensemble(&ensemble, fragment)
    }

    /* Same computation from an already-evolved ensemble, so callers looping
     * over many fragments at one time pay for the propagators once. */
    pub(crate) fn joint_state_with_ensemble(
        &self,
        ensemble: &BranchEnsemble,
        fragment: &Fragment,
    ) -> Result<DensityMatrix, ModelError> {
        let t = ensemble.time();
        let size = self.environment_size();
        let d_s = self.pointer.dim();
        let mut d_f: usize = 1;
        for &k in fragment.indices() {
            if k >= size {
                return Err(ModelError::FragmentIndexOutOfRange { index: k, size });
            }
            d_f = d_f.saturating_mul(self.subsystem(k)?.dim());
        }
        let dim = d_s.saturating_mul(d_f);
        if dim > DENSE_DIM_CAP {
            return Err(ModelError::JointDimensionTooLarge {
                dim,
                cap: DENSE_DIM_CAP,
            });
        }
        let complement = fragment.complement(size)?;
        let rho_s = self.pointer.initial_state.matrix();
        let phases = &self.pointer.system_phases;

        let mut out: ComplexMatrix = Array2::zeros((dim, dim));
        for s in 0..d_s {
            for sp in s..d_s {
                let phase = C64::from_polar(1.0, -(phases[s] - phases[sp]) * t);
                let coeff = rho_s[(s, sp)] * phase * ensemble.decoherence_factor(&complement, s, sp);
                /* ⊗_{k∈F} U_k^s ρ_k(0) U_k^{sp}†, ascending k. */
                let mut block = Array2::from_elem((1, 1), C64::new(1.0, 0.0));
                for &k in fragment.indices() {
                    let branch = &ensemble.branches[k];
                    let cross = matmul(&branch.evolved_initials[s], &linalg::adjoint(&branch.propagators[sp]));
                    block = tensor_product_capped(&block, &cross, DENSE_DIM_CAP)?;
                }
                for i in 0..d_f {
                    for j in 0..d_f {
                        out[(s * d_f + i, sp * d_f + j)] = coeff * block[(i, j)];
                        if s != sp {
                            out[(sp * d_f + j, s * d_f + i)] = (coeff * block[(i, j)]).conj();
                        }
                    }
                }
            }
        }
        Ok(DensityMatrix::from_trusted(out))
    }
}

fn branch_propagator(
    spec: &SubsystemSpec,
    pointer_eigenvalue: f64,
    t: f64,
) -> Result<ComplexMatrix, ModelError> {
    let pi = C64::new(pointer_eigenvalue, 0.0);
    let generator = spec.interaction.mapv(|z| z * pi) + &spec.self_hamiltonian;
    let spectrum = hermitian_spectrum(&generator, &DEFAULT_TOLERANCES)?;
    let u = spectrum.apply_complex(|lam| C64::from_polar(1.0, -t * lam));
    debug_assert!({
        let gram = matmul(&linalg::adjoint(&u), &u);
        linalg::frobenius_norm(&(&gram - &linalg::identity(u.nrows()))) <= 1e-10
    });
    Ok(u)
}

/// One subsystem at fixed time: branch propagators U^ŝ, the products
/// A_ŝ = U^ŝ ρ(0), the conditional states A_ŝ U^ŝ†, and the overlap table
/// λ^{ss′} = tr[U^{s′}† U^{s} ρ(0)] = ⟨U^{s′}, A_s⟩_F.
#[derive(Debug)]
pub struct SubsystemBranch {
    propagators: Vec<ComplexMatrix>,
    evolved_initials: Vec<ComplexMatrix>,
    conditional_states: Vec<DensityMatrix>,
    overlaps: Array2<C64>,
}

impl SubsystemBranch {
    pub fn propagator(&self, pointer_index: usize) -> &ComplexMatrix {
        &self.propagators[pointer_index]
    }

    pub fn conditional_state(&self, pointer_index: usize) -> &DensityMatrix {
        &self.conditional_states[pointer_index]
    }

    /// λ^{ss′}(t); the diagonal is 1 up to rounding and |λ| ≤ 1.
    pub fn overlap(&self, s: usize, sp: usize) -> C64 {
        self.overlaps[(s, sp)]
    }
}

fn evolve_subsystem(
    spec: &SubsystemSpec,
    pointer_eigenvalues: &[f64],
    t: f64,
) -> Result<SubsystemBranch, ModelError> {
    let d_s = pointer_eigenvalues.len();
    let rho0 = spec.initial_state.matrix();
    let mut propagators = Vec::with_capacity(d_s);
    let mut evolved_initials = Vec::with_capacity(d_s);
    let mut conditional_states = Vec::with_capacity(d_s);
    for &pi in pointer_eigenvalues {
        let u = branch_propagator(spec, pi, t)?;
        let a = matmul(&u, rho0);
        conditional_states.push(DensityMatrix::from_trusted(matmul(
            &a,
            &linalg::adjoint(&u),
        )));
        propagators.push(u);
        evolved_initials.push(a);
    }
    let mut overlaps = Array2::zeros((d_s, d_s));
    for s in 0..d_s {
        for sp in 0..d_s {
            /* tr[U^{sp}† U^{s} ρ(0)] = Σ_{ij} conj(U^{sp})_{ij} (U^{s} ρ(0))_{ij} */
            let lambda: C64 = propagators[sp]
                .iter()
                .zip(evolved_initials[s].iter())
                .map(|(u, a)| u.conj() * a)
                .sum();
            debug_assert!(lambda.norm() <= 1.0 + 1e-10);
            overlaps[(s, sp)] = lambda;
        }
    }
    Ok(SubsystemBranch {
        propagators,
        evolved_initials,
        conditional_states,
        overlaps,
    })
}

/// All subsystems evolved to one time. Branches are `Arc`-shared so uniform
/// models hold one copy regardless of ♯ℰ.
#[derive(Debug)]
pub struct BranchEnsemble {
    time: f64,
    pointer_dim: usize,
    pure_branches: bool,
    branches: Vec<Arc<SubsystemBranch>>,
}

impl BranchEnsemble {
    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn pointer_dim(&self) -> usize {
        self.pointer_dim
    }

    pub fn pure_branches(&self) -> bool {
        self.pure_branches
    }

    pub fn environment_size(&self) -> usize {
        self.branches.len()
    }

    /// True when every branch is the same shared object, i.e. the model was
    /// uniform and one subsystem was evolved and replicated.
    pub fn is_uniform(&self) -> bool {
        self.branches
            .windows(2)
            .all(|pair| Arc::ptr_eq(&pair[0], &pair[1]))
    }

    pub fn branch(&self, k: usize) -> &SubsystemBranch {
        &self.branches[k]
    }

    /// λ_k^{ss′}(t) for subsystem `k`.
    pub fn overlap(&self, k: usize, s: usize, sp: usize) -> C64 {
        self.branches[k].overlaps[(s, sp)]
    }

    /// Decoherence factor Γ^{ss′}(t) = Π_{k ∈ subset} λ_k^{ss′}(t).
    ///
    /// The product runs in ascending subsystem order so repeated evaluation
    /// is bit-deterministic; `s = s′` returns exactly 1 (each factor is the
    /// trace of a unit-trace state). Typically called with the complement of
    /// an intercepted fragment.
    pub fn decoherence_factor(&self, subset: &Fragment, s: usize, sp: usize) -> C64 {
        if s == sp {
            return C64::new(1.0, 0.0);
        }
        let mut gamma = C64::new(1.0, 0.0);
        for &k in subset.indices() {
            gamma *= self.branches[k].overlaps[(s, sp)];
        }
        gamma
    }
}

/// A subset of environment subsystem indices (0-based), kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Fragment {
    indices: Vec<usize>,
}

impl Fragment {
    pub fn new(
        indices: impl IntoIterator<Item = usize>,
        environment_size: usize,
    ) -> Result<Self, ModelError> {
        let mut indices: Vec<usize> = indices.into_iter().collect();
        indices.sort_unstable();
        for pair in indices.windows(2) {
            if pair[0] == pair[1] {
                return Err(ModelError::DuplicateFragmentIndex { index: pair[0] });
            }
        }
        if let Some(&last) = indices.last() {
            if last >= environment_size {
                return Err(ModelError::FragmentIndexOutOfRange {
                    index: last,
                    size: environment_size,
                });
            }
        }
        Ok(Fragment { indices })
    }

    pub fn empty() -> Self {
        Fragment {
            indices: Vec::new(),
        }
    }

    /// The first `m` subsystems {0, …, m−1}.
    pub fn leading(m: usize, environment_size: usize) -> Result<Self, ModelError> {
        Fragment::new(0..m, environment_size)
    }

    pub fn full(environment_size: usize) -> Self {
        Fragment {
            indices: (0..environment_size).collect(),
        }
    }

    pub fn size(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn contains(&self, k: usize) -> bool {
        self.indices.binary_search(&k).is_ok()
    }

    /// Everything outside this fragment: ℰ ∖ F.
    pub fn complement(&self, environment_size: usize) -> Result<Fragment, ModelError> {
        if let Some(&last) = self.indices.last() {
            if last >= environment_size {
                return Err(ModelError::FragmentIndexOutOfRange {
                    index: last,
                    size: environment_size,
                });
            }
        }
        let mut indices = Vec::with_capacity(environment_size - self.indices.len());
        let mut members = self.indices.iter().peekable();
        for k in 0..environment_size {
            if members.peek() == Some(&&k) {
                members.next();
            } else {
                indices.push(k);
            }
        }
        Ok(Fragment { indices })
    }
}

/// Outcome of [`validate_model`]: hard errors (non-Hermitian operators) and
/// physics warnings (degeneracies that weaken record formation).
#[derive(Debug, Clone, Default, Serialize)]
pub struct ValidationReport {
    errors: Vec<String>,
    warnings: Vec<String>,
}

impl ValidationReport {
    pub fn errors(&self) -> &[String] {
        &self.errors
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn has_errors(&self) -> bool {
        !self.errors.is_empty()
    }

    pub fn is_clean(&self) -> bool {
        self.errors.is_empty() && self.warnings.is_empty()
    }
}

/// Checks a model beyond what the constructors enforce structurally.
///
/// Errors: non-Hermitian interaction or self-Hamiltonian operators.
/// Warnings: degenerate pointer eigenvalues, and interaction operators with a
/// (near-)degenerate spectrum; both weaken the records the environment can
/// keep but do not make the model ill-defined, so callers decide whether
/// warnings abort.
pub fn validate_model(model: &DecoherenceModel) -> ValidationReport {
    let mut report = ValidationReport::default();
    let tol = &DEFAULT_TOLERANCES;

    let pis = model.pointer.pointer_eigenvalues();
    'outer: for i in 0..pis.len() {
        for j in (i + 1)..pis.len() {
            let scale = pis[i].abs().max(pis[j].abs()).max(1.0);
            if (pis[i] - pis[j]).abs() <= 1e-12 * scale {
                report.warnings.push(format!(
                    "degenerate pointer eigenvalues: indices {i} and {j} both {:.6e}; \
                     these branches imprint identical records",
                    pis[i]
                ));
                break 'outer;
            }
        }
    }

    /* Uniform models share one subsystem; checking it once covers all. */
    let check_count = if model.is_uniform() {
        1
    } else {
        model.environment_size()
    };
    for k in 0..check_count {
        let label = if model.is_uniform() && model.environment_size() > 1 {
            "all subsystems (shared template)".to_string()
        } else {
            format!("subsystem {k}")
        };
        let spec = model.subsystem(k).expect("index bounded by size");
        let dev_y = hermiticity_deviation(&spec.interaction);
        if dev_y > tol.herm {
            report.errors.push(format!(
                "{label}: interaction not Hermitian (deviation {dev_y:.3e} exceeds {:.1e})",
                tol.herm
            ));
        }
        let dev_w = hermiticity_deviation(&spec.self_hamiltonian);
        if dev_w > tol.herm {
            report.errors.push(format!(
                "{label}: self-Hamiltonian not Hermitian (deviation {dev_w:.3e} exceeds {:.1e})",
                tol.herm
            ));
        }
        if dev_y <= tol.herm {
            if let Ok(evals) = hermitian_eigenvalues(&spec.interaction) {
                let scale = evals
                    .iter()
                    .fold(1.0f64, |acc, &l| acc.max(l.abs()));
                let degenerate = evals
                    .windows(2)
                    .any(|w| (w[1] - w[0]).abs() <= 1e-9 * scale);
                if degenerate {
                    report.warnings.push(format!(
                        "{label}: interaction spectrum is (near-)degenerate; \
                         records from this subsystem are weakened"
                    ));
                }
            }
        }
    }
    report
}

/// Random two-level-system model with `environment_size` subsystems of
/// dimension `subsystem_dim`: random pure system superposition, pointer
/// eigenvalues ±1/2, random phases, and random Hermitian couplings. Used by
/// randomized invariant checks and the self-test suite.
pub fn random_two_level_model(
    environment_size: usize,
    subsystem_dim: usize,
    pure_environment: bool,
    rng: &mut impl rand::Rng,
) -> DecoherenceModel {
    let p1 = rng.gen_range(0.15..0.85);
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let mut pointer =
        PointerSpec::qubit_superposition(p1, phase).expect("valid qubit superposition");
    pointer.system_phases = vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
    let specs = (0..environment_size)
        .map(|_| {
            let initial = if pure_environment {
                linalg::random_pure_state(subsystem_dim, rng)
            } else {
                linalg::random_density(subsystem_dim, rng)
            };
            SubsystemSpec::new(
                initial,
                linalg::random_hermitian(subsystem_dim, rng),
                linalg::random_hermitian(subsystem_dim, rng),
            )
            .expect("matching dimensions")
        })
        .collect();
    DecoherenceModel::new_explicit(pointer, specs).expect("nonempty environment")
}
