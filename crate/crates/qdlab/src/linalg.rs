//! Dense complex-matrix primitives consumed by every other module:
//! tensor products, partial traces, Hermitian spectra, von Neumann
//! entropies, fractional matrix powers, trace norm, and fidelity.
//!
//! Storage is dense and row-major throughout ([`ComplexMatrix`] is an
//! `ndarray` array); sparse or structured representations are never
//! required for correctness. All functions are pure and thread-safe.

use ndarray::{Array1, Array2};
use ndarray_linalg::{EigValsh, Eigh, UPLO};
use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::threads::pin_blas_threads;

/// Dense complex matrix, row-major.
pub type ComplexMatrix = Array2<C64>;

/// Default cap on the dimension produced by dense tensor products.
pub const DENSE_DIM_CAP: usize = 1 << 13;

/// Validation and clipping tolerances.
///
/// The defaults sit well above double-precision eigensolver noise at
/// dimension ≤ 2^13 while still catching genuinely malformed inputs.
#[derive(Clone, Copy, Debug)]
pub struct Tolerances {
    /// Max elementwise deviation |A_ij − conj(A_ji)| tolerated as Hermitian.
    pub herm: f64,
    /// Max deviation of a density-matrix trace from one.
    pub trace: f64,
    /// Eigenvalues ≥ −psd are accepted as nonnegative.
    pub psd: f64,
    /// Eigenvalues ≤ clip are treated as exact zeros before logs/powers.
    pub clip: f64,
    /// Spectrum reconstruction: ‖A − VΛV†‖_F ≤ eig·‖A‖_F.
    pub eig: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { herm: 1e-9, trace: 1e-9, psd: 1e-9, clip: 1e-12, eig: 1e-9 }
    }
}

pub const DEFAULT_TOLERANCES: Tolerances =
    Tolerances { herm: 1e-9, trace: 1e-9, psd: 1e-9, clip: 1e-12, eig: 1e-9 };

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("matrix is not Hermitian: deviation {deviation:.3e} exceeds {tolerance:.3e}")]
    NotHermitian { deviation: f64, tolerance: f64 },
    #[error("matrix has nonfinite entries")]
    NonFinite,
    #[error("trace deviates from one by {deviation:.3e} (tolerance {tolerance:.3e})")]
    TraceNotOne { deviation: f64, tolerance: f64 },
    #[error("negative eigenvalue {value:.3e} below -{tolerance:.3e}")]
    NotPositiveSemidefinite { value: f64, tolerance: f64 },
    #[error("dense dimension {dim} exceeds cap {cap}; use a structured fast path instead")]
    DenseCapExceeded { dim: usize, cap: usize },
    #[error("power exponent {0} outside [0, 1]")]
    ExponentOutOfRange(f64),
    #[error("partial trace: factor dimensions multiply to {product}, matrix has dimension {dim}")]
    FactorMismatch { product: usize, dim: usize },
    #[error("partial trace: kept index set invalid (empty, repeated, or out of range)")]
    BadKeepSet,
    #[error("eigendecomposition reconstruction error {error:.3e} exceeds {tolerance:.3e}")]
    Reconstruction { error: f64, tolerance: f64 },
    #[error("eigensolver backend failure: {0}")]
    Backend(String),
}

/// Hermitian eigendecomposition with ascending eigenvalues and the
/// eigenvector unitary stored column-wise.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: ComplexMatrix,
}

/// Validated density matrix: Hermitian, unit trace, PSD to tolerance.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    mat: ComplexMatrix,
}

impl DensityMatrix {
    /// Validates against the default [`Tolerances`].
    pub fn new(mat: ComplexMatrix) -> Result<Self, LinalgError> {
        Self::new_with(mat, &DEFAULT_TOLERANCES)
    }

    pub fn new_with(mat: ComplexMatrix, tol: &Tolerances) -> Result<Self, LinalgError> {
        ensure_square(&mat)?;
        ensure_finite(&mat)?;
        let dev = hermiticity_deviation(&mat);
        if dev > tol.herm {
            return Err(LinalgError::NotHermitian { deviation: dev, tolerance: tol.herm });
        }
        let tr = trace(&mat);
        let tr_dev = (tr - C64::new(1.0, 0.0)).norm();
        if tr_dev > tol.trace {
            return Err(LinalgError::TraceNotOne { deviation: tr_dev, tolerance: tol.trace });
        }
        let evals = hermitian_eigenvalues(&mat)?;
        if let Some(&min) = evals.first() {
            if min < -tol.psd {
                return Err(LinalgError::NotPositiveSemidefinite {
                    value: min,
                    tolerance: tol.psd,
                });
            }
        }
        Ok(DensityMatrix { mat })
    }

    /* Constructor for matrices whose invariants hold by construction
     * (unitary conjugations of validated states, partial traces, convex
     * mixtures); skips the O(d^3) eigenvalue check. */
    pub(crate) fn from_trusted(mat: ComplexMatrix) -> Self {
        debug_assert!(hermiticity_deviation(&mat) <= 1e-8);
        debug_assert!((trace(&mat) - C64::new(1.0, 0.0)).norm() <= 1e-8);
        DensityMatrix { mat }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.mat
    }

    /// Largest eigenvalue ≥ 1 − clip, i.e. the state is pure to tolerance.
    pub fn is_pure(&self, tol: &Tolerances) -> bool {
        let evals = hermitian_eigenvalues(&self.mat).expect("eigenvalues of validated state");
        evals.last().is_some_and(|&max| max >= 1.0 - tol.clip)
    }
}

pub fn identity(dim: usize) -> ComplexMatrix {
    Array2::eye(dim).mapv(|x: f64| C64::new(x, 0.0))
}

pub fn trace(a: &ComplexMatrix) -> C64 {
    a.diag().sum()
}

/// Conjugate transpose.
pub fn adjoint(a: &ComplexMatrix) -> ComplexMatrix {
    let mut out = Array2::zeros((a.ncols(), a.nrows()));
    for ((i, j), v) in a.indexed_iter() {
        out[(j, i)] = v.conj();
    }
    out
}

/// Matrix product through the BLAS backend (single-threaded, so results
/// never depend on worker count).
pub fn matmul(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    pin_blas_threads();
    a.dot(b)
}

pub fn frobenius_norm(a: &ComplexMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Max elementwise deviation of A from A†.
pub fn hermiticity_deviation(a: &ComplexMatrix) -> f64 {
    let mut dev: f64 = 0.0;
    for i in 0..a.nrows() {
        for j in i..a.ncols() {
            dev = dev.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    dev
}

fn ensure_square(a: &ComplexMatrix) -> Result<(), LinalgError> {
    if a.nrows() != a.ncols() {
        return Err(LinalgError::NotSquare { rows: a.nrows(), cols: a.ncols() });
    }
    Ok(())
}

fn ensure_finite(a: &ComplexMatrix) -> Result<(), LinalgError> {
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    Ok(())
}

fn ensure_hermitian(a: &ComplexMatrix, tol: &Tolerances) -> Result<(), LinalgError> {
    ensure_square(a)?;
    ensure_finite(a)?;
    let dev = hermiticity_deviation(a);
    if dev > tol.herm {
        return Err(LinalgError::NotHermitian { deviation: dev, tolerance: tol.herm });
    }
    Ok(())
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(a: &ComplexMatrix) -> Result<Vec<f64>, LinalgError> {
    pin_blas_threads();
    let vals: Array1<f64> =
        a.eigvalsh(UPLO::Lower).map_err(|e| LinalgError::Backend(e.to_string()))?;
    Ok(vals.to_vec())
}

/// Full Hermitian eigendecomposition with a reconstruction check
/// ‖A − VΛV†‖_F ≤ eig·‖A‖_F.
pub fn hermitian_spectrum(a: &ComplexMatrix, tol: &Tolerances) -> Result<Spectrum, LinalgError> {
    ensure_hermitian(a, tol)?;
    pin_blas_threads();
    let (vals, vecs) = a.eigh(UPLO::Lower).map_err(|e| LinalgError::Backend(e.to_string()))?;
    /* The backend hands back the conjugated eigenvector matrix for complex
     * Hermitian input (row-major/LAPACK layout artifact); normalize to the
     * standard convention where columns are eigenvectors of `a`. The
     * reconstruction check below keeps this convention honest. */
    let vecs = vecs.mapv(|z| z.conj());
    let spectrum = Spectrum { eigenvalues: vals.to_vec(), eigenvectors: vecs };
    let rebuilt = spectrum.reconstruct();
    let norm = frobenius_norm(a).max(1.0);
    let err = frobenius_norm(&(&rebuilt - a));
    if err > tol.eig * norm {
        return Err(LinalgError::Reconstruction { error: err, tolerance: tol.eig * norm });
    }
    Ok(spectrum)
}

impl Spectrum {
    /// VΛV†.
    pub fn reconstruct(&self) -> ComplexMatrix {
        self.apply(|x| x)
    }

    /// V f(Λ) V† for a real spectral function.
    pub fn apply(&self, f: impl Fn(f64) -> f64) -> ComplexMatrix {
        let mut scaled = self.eigenvectors.clone();
        for (col, &val) in self.eigenvalues.iter().enumerate() {
            let fv = C64::new(f(val), 0.0);
            scaled.column_mut(col).mapv_inplace(|z| z * fv);
        }
        matmul(&scaled, &adjoint(&self.eigenvectors))
    }

    /// V g(Λ) V† for a complex spectral function (e.g. exp(−itλ)).
    pub fn apply_complex(&self, g: impl Fn(f64) -> C64) -> ComplexMatrix {
        let mut scaled = self.eigenvectors.clone();
        for (col, &val) in self.eigenvalues.iter().enumerate() {
            let gv = g(val);
            scaled.column_mut(col).mapv_inplace(|z| z * gv);
        }
        matmul(&scaled, &adjoint(&self.eigenvectors))
    }
}

/// Kronecker product with `a` as the slow (left) factor, capped at
/// [`DENSE_DIM_CAP`].
pub fn tensor_product(
    a: &ComplexMatrix,
    b: &ComplexMatrix,
) -> Result<ComplexMatrix, LinalgError> {
    tensor_product_capped(a, b, DENSE_DIM_CAP)
}

pub fn tensor_product_capped(
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    cap: usize,
) -> Result<ComplexMatrix, LinalgError> {
    let rows = a.nrows().checked_mul(b.nrows());
    let cols = a.ncols().checked_mul(b.ncols());
    match (rows, cols) {
        (Some(r), Some(c)) if r <= cap && c <= cap => {}
        _ => {
            let dim = rows.unwrap_or(usize::MAX).max(cols.unwrap_or(usize::MAX));
            return Err(LinalgError::DenseCapExceeded { dim, cap });
        }
    }
    ensure_finite(a)?;
    ensure_finite(b)?;
    Ok(ndarray::linalg::kron(a, b))
}

/// Reduced state on the kept factors, factor order preserved.
///
/// `dims` lists every tensor-factor dimension in basis order (leftmost
/// factor first, matching `tensor_product`); `keep` indexes into `dims`.
pub fn partial_trace(
    rho: &DensityMatrix,
    dims: &[usize],
    keep: &[usize],
) -> Result<DensityMatrix, LinalgError> {
    let full: usize = dims.iter().product();
    if full != rho.dim() || dims.contains(&0) {
        return Err(LinalgError::FactorMismatch { product: full, dim: rho.dim() });
    }
    let mut seen = vec![false; dims.len()];
    if keep.is_empty() {
        return Err(LinalgError::BadKeepSet);
    }
    for &f in keep {
        if f >= dims.len() || seen[f] {
            return Err(LinalgError::BadKeepSet);
        }
        seen[f] = true;
    }

    /* Row-major strides over the factor grid. */
    let mut strides = vec![1usize; dims.len()];
    for f in (0..dims.len().saturating_sub(1)).rev() {
        strides[f] = strides[f + 1] * dims[f + 1];
    }
    let mut keep_sorted = keep.to_vec();
    keep_sorted.sort_unstable();
    let traced: Vec<usize> = (0..dims.len()).filter(|f| !keep_sorted.contains(f)).collect();

    /* Flat offsets of every kept multi-index and every traced multi-index. */
    let offsets = |factors: &[usize]| -> Vec<usize> {
        let mut offs = vec![0usize];
        for &f in factors {
            let mut next = Vec::with_capacity(offs.len() * dims[f]);
            for &base in &offs {
                for i in 0..dims[f] {
                    next.push(base + i * strides[f]);
                }
            }
            offs = next;
        }
        offs
    };
    let keep_offsets = offsets(&keep_sorted);
    let traced_offsets = offsets(&traced);

    let kept_dim: usize = keep_sorted.iter().map(|&f| dims[f]).product();
    let mat = rho.matrix();
    let mut out = Array2::<C64>::zeros((kept_dim, kept_dim));
    for (a, &ra) in keep_offsets.iter().enumerate() {
        for (b, &rb) in keep_offsets.iter().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for &t in &traced_offsets {
                acc += mat[(ra + t, rb + t)];
            }
            out[(a, b)] = acc;
        }
    }
    Ok(DensityMatrix::from_trusted(out))
}

/// −Σ λ log₂ λ in bits, with eigenvalues ≤ clip treated as exact zeros.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> f64 {
    von_neumann_entropy_with(rho, &DEFAULT_TOLERANCES)
}

pub fn von_neumann_entropy_with(rho: &DensityMatrix, tol: &Tolerances) -> f64 {
    let evals = hermitian_eigenvalues(rho.matrix()).expect("eigenvalues of validated state");
    entropy_of_eigenvalues(&evals, tol.clip)
}

/// Shannon entropy in bits of a clipped eigenvalue list.
pub fn entropy_of_eigenvalues(evals: &[f64], clip: f64) -> f64 {
    -evals
        .iter()
        .filter(|&&l| l > clip)
        .map(|&l| l * l.log2())
        .sum::<f64>()
}

/// V diag(λ^c) V† for Hermitian PSD input and c ∈ [0, 1].
///
/// Eigenvalues in [−psd, clip] are mapped to 0 for every c (convention
/// 0^0 ≡ 0 on the null space, so A^c projects onto the support as c → 0).
pub fn fractional_power(a: &ComplexMatrix, c: f64) -> Result<ComplexMatrix, LinalgError> {
    fractional_power_with(a, c, &DEFAULT_TOLERANCES)
}

pub fn fractional_power_with(
    a: &ComplexMatrix,
    c: f64,
    tol: &Tolerances,
) -> Result<ComplexMatrix, LinalgError> {
    if !(0.0..=1.0).contains(&c) {
        return Err(LinalgError::ExponentOutOfRange(c));
    }
    let spectrum = hermitian_spectrum(a, tol)?;
    if let Some(&min) = spectrum.eigenvalues.first() {
        if min < -tol.psd {
            return Err(LinalgError::NotPositiveSemidefinite { value: min, tolerance: tol.psd });
        }
    }
    Ok(spectrum.apply(|l| if l <= tol.clip { 0.0 } else { l.powf(c) }))
}

/// Σ |λ| over the spectrum of a Hermitian matrix.
pub fn trace_norm(a: &ComplexMatrix) -> Result<f64, LinalgError> {
    trace_norm_with(a, &DEFAULT_TOLERANCES)
}

pub fn trace_norm_with(a: &ComplexMatrix, tol: &Tolerances) -> Result<f64, LinalgError> {
    ensure_hermitian(a, tol)?;
    let evals = hermitian_eigenvalues(a)?;
    Ok(evals.iter().map(|l| l.abs()).sum())
}

/// Uniform random complex matrix with entries in the centered unit square.
pub fn random_matrix(dim: usize, rng: &mut impl rand::Rng) -> ComplexMatrix {
    Array2::from_shape_fn((dim, dim), |_| {
        C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
    })
}

/// Random Hermitian matrix (G + G†)/2.
pub fn random_hermitian(dim: usize, rng: &mut impl rand::Rng) -> ComplexMatrix {
    let g = random_matrix(dim, rng);
    let mut h = &g + &adjoint(&g);
    h.mapv_inplace(|z| z * C64::new(0.5, 0.0));
    h
}

/// Random full-rank density matrix GG†/tr(GG†) (Ginibre construction).
pub fn random_density(dim: usize, rng: &mut impl rand::Rng) -> DensityMatrix {
    let g = random_matrix(dim, rng);
    let gg = matmul(&g, &adjoint(&g));
    let tr = trace(&gg).re;
    DensityMatrix::new(gg.mapv(|z| z / tr)).expect("Ginibre state is valid")
}

/// Random pure state |ψ⟩⟨ψ| from a normalized random complex vector.
pub fn random_pure_state(dim: usize, rng: &mut impl rand::Rng) -> DensityMatrix {
    use rand::distributions::Distribution;
    let normal = rand::distributions::Uniform::new(-1.0f64, 1.0);
    let mut v: Vec<C64> = (0..dim)
        .map(|_| C64::new(normal.sample(rng), normal.sample(rng)))
        .collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.iter_mut().for_each(|z| *z /= norm);
    let mut out = Array2::zeros((dim, dim));
    for i in 0..dim {
        for j in 0..dim {
            out[(i, j)] = v[i] * v[j].conj();
        }
    }
    DensityMatrix::from_trusted(out)
}

/// Squared-overlap fidelity F = (tr√(√ρ σ √ρ))²; for pure states this is
/// |⟨ψ|φ⟩|².
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64, LinalgError> {
    fidelity_with(rho, sigma, &DEFAULT_TOLERANCES)
}

pub fn fidelity_with(
    rho: &DensityMatrix,
    sigma: &DensityMatrix,
    tol: &Tolerances,
) -> Result<f64, LinalgError> {
    if rho.dim() != sigma.dim() {
        return Err(LinalgError::DimensionMismatch { left: rho.dim(), right: sigma.dim() });
    }
    let sqrt_rho = fractional_power_with(rho.matrix(), 0.5, tol)?;
    let inner = matmul(&matmul(&sqrt_rho, sigma.matrix()), &sqrt_rho);
    /* Hermitian PSD up to eigensolver noise. Eigenvalues at the clip
     * threshold are zeroed before the square root: √(noise) would
     * otherwise inject O(1e-8) into an otherwise exact trace. */
    let evals = hermitian_eigenvalues(&inner)?;
    let root_sum: f64 =
        evals.iter().map(|&l| if l <= tol.clip { 0.0 } else { l.sqrt() }).sum();
    let f = root_sum * root_sum;
    debug_assert!(f <= 1.0 + 1e-8, "fidelity overshoot {f}");
    Ok(f.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn max_abs_diff(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn tensor_product_identity_case() {
        let i2 = identity(2);
        let i4 = tensor_product(&i2, &i2).unwrap();
        assert_eq!(max_abs_diff(&i4, &identity(4)), 0.0);
    }

    #[test]
    fn tensor_product_basis_convention() {
        /* |0><0| ⊗ |1><1| → diag(0,1,0,0): left factor is the slow index. */
        let p0 = array![[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(0.0, 0.0)]];
        let p1 = array![[c(0.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]];
        let t = tensor_product(&p0, &p1).unwrap();
        let expected = Array2::from_diag(&ndarray::arr1(&[
            c(0.0, 0.0),
            c(1.0, 0.0),
            c(0.0, 0.0),
            c(0.0, 0.0),
        ]));
        assert_eq!(max_abs_diff(&t, &expected), 0.0);
    }

    #[test]
    fn tensor_product_trace_is_product_of_traces() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let a = random_matrix(2, &mut rng);
            let b = random_matrix(2, &mut rng);
            let t = tensor_product(&a, &b).unwrap();
            let lhs = trace(&t);
            let rhs = trace(&a) * trace(&b);
            assert!((lhs - rhs).norm() < 1e-12);
        }
    }

    #[test]
    fn tensor_product_associativity() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..10 {
            let a = random_matrix(2, &mut rng);
            let b = random_matrix(3, &mut rng);
            let d = random_matrix(2, &mut rng);
            let left = tensor_product(&tensor_product(&a, &b).unwrap(), &d).unwrap();
            let right = tensor_product(&a, &tensor_product(&b, &d).unwrap()).unwrap();
            assert!(max_abs_diff(&left, &right) < 1e-12);
        }
    }

    #[test]
    fn tensor_product_cap_is_enforced() {
        let big = identity(128);
        let err = tensor_product(&big, &identity(128)).unwrap_err();
        assert!(matches!(err, LinalgError::DenseCapExceeded { .. }));
    }

    #[test]
    fn partial_trace_of_product_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = random_density(2, &mut rng);
        let b = random_density(3, &mut rng);
        let joint =
            DensityMatrix::new(tensor_product(a.matrix(), b.matrix()).unwrap()).unwrap();
        let reduced = partial_trace(&joint, &[2, 3], &[0]).unwrap();
        assert!(max_abs_diff(reduced.matrix(), a.matrix()) < 1e-12);
        let reduced_b = partial_trace(&joint, &[2, 3], &[1]).unwrap();
        assert!(max_abs_diff(reduced_b.matrix(), b.matrix()) < 1e-12);
    }

    #[test]
    fn partial_trace_of_bell_state() {
        let s = c(0.5, 0.0);
        let bell = array![
            [s, c(0.0, 0.0), c(0.0, 0.0), s],
            [c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
            [c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
            [s, c(0.0, 0.0), c(0.0, 0.0), s],
        ];
        let rho = DensityMatrix::new(bell).unwrap();
        for keep in [0usize, 1] {
            let reduced = partial_trace(&rho, &[2, 2], &[keep]).unwrap();
            let maximally_mixed = identity(2).mapv(|z| z * c(0.5, 0.0));
            assert!(max_abs_diff(reduced.matrix(), &maximally_mixed) < 1e-12);
        }
    }

    #[test]
    fn partial_trace_sequential_equals_joint() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let rho = random_density(2 * 3 * 2, &mut rng);
        let dims = [2usize, 3, 2];
        let joint = partial_trace(&rho, &dims, &[1]).unwrap();
        let step1 = partial_trace(&rho, &dims, &[0, 1]).unwrap();
        let step2 = partial_trace(&step1, &[2, 3], &[1]).unwrap();
        assert!(max_abs_diff(joint.matrix(), step2.matrix()) < 1e-10);
        /* Trace is preserved. */
        assert!((trace(joint.matrix()).re - 1.0).abs() < 1e-10);
    }

    #[test]
    fn entropy_of_pure_and_mixed_states() {
        let pure = DensityMatrix::new(array![
            [c(1.0, 0.0), c(0.0, 0.0)],
            [c(0.0, 0.0), c(0.0, 0.0)]
        ])
        .unwrap();
        assert!(von_neumann_entropy(&pure).abs() < 1e-12);

        let mixed = DensityMatrix::new(identity(8).mapv(|z| z / c(8.0, 0.0))).unwrap();
        assert!((von_neumann_entropy(&mixed) - 3.0).abs() < 1e-10);

        /* Frozen binary-entropy value for diag(0.8, 0.2). */
        let diag = DensityMatrix::new(Array2::from_diag(&ndarray::arr1(&[
            c(0.8, 0.0),
            c(0.2, 0.0),
        ])))
        .unwrap();
        assert!((von_neumann_entropy(&diag) - 0.721_928_094_887_362_3).abs() < 1e-12);
    }

    #[test]
    fn entropy_is_additive_over_tensor_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for (da, db) in [(2usize, 4usize), (3, 5), (8, 8)] {
            let a = random_density(da, &mut rng);
            let b = random_density(db, &mut rng);
            let joint =
                DensityMatrix::new(tensor_product(a.matrix(), b.matrix()).unwrap()).unwrap();
            let lhs = von_neumann_entropy(&joint);
            let rhs = von_neumann_entropy(&a) + von_neumann_entropy(&b);
            assert!((lhs - rhs).abs() < 1e-8, "additivity violated: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn fractional_power_trivial_cases() {
        let i = identity(3);
        for c_exp in [0.0, 0.3, 1.0] {
            assert!(max_abs_diff(&fractional_power(&i, c_exp).unwrap(), &i) < 1e-12);
        }
        let a = Array2::from_diag(&ndarray::arr1(&[c(4.0, 0.0), c(1.0, 0.0)]));
        let root = fractional_power(&a, 0.5).unwrap();
        let expected = Array2::from_diag(&ndarray::arr1(&[c(2.0, 0.0), c(1.0, 0.0)]));
        assert!(max_abs_diff(&root, &expected) < 1e-12);

        /* Null-space convention: diag(0,1)^{1/2} = diag(0,1). */
        let p = Array2::from_diag(&ndarray::arr1(&[c(0.0, 0.0), c(1.0, 0.0)]));
        assert!(max_abs_diff(&fractional_power(&p, 0.5).unwrap(), &p) < 1e-12);
    }

    #[test]
    fn fractional_power_interpolates_on_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for _ in 0..10 {
            let rho = random_density(4, &mut rng);
            let a = rho.matrix();
            for c_exp in [0.1, 0.5, 0.9] {
                let left = fractional_power(a, c_exp).unwrap();
                let right = fractional_power(a, 1.0 - c_exp).unwrap();
                let product = matmul(&left, &right);
                assert!(max_abs_diff(&product, a) < 1e-8);
            }
        }
    }

    #[test]
    fn fractional_power_rejects_negative_spectrum() {
        let a = Array2::from_diag(&ndarray::arr1(&[c(1.0, 0.0), c(-0.5, 0.0)]));
        assert!(matches!(
            fractional_power(&a, 0.5),
            Err(LinalgError::NotPositiveSemidefinite { .. })
        ));
    }

    #[test]
    fn trace_norm_examples_and_axioms() {
        let a = Array2::from_diag(&ndarray::arr1(&[c(1.0, 0.0), c(-2.0, 0.0)]));
        assert!((trace_norm(&a).unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(trace_norm(&Array2::zeros((3, 3))).unwrap(), 0.0);

        /* Orthogonal pure states are trace-distance 2 apart. */
        let p0 = array![[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(0.0, 0.0)]];
        let p1 = array![[c(0.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]];
        assert!((trace_norm(&(&p0 - &p1)).unwrap() - 2.0).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let x = random_hermitian(4, &mut rng);
            let y = random_hermitian(4, &mut rng);
            let tx = trace_norm(&x).unwrap();
            let ty = trace_norm(&y).unwrap();
            let txy = trace_norm(&(&x + &y)).unwrap();
            assert!(txy <= tx + ty + 1e-10, "triangle inequality violated");
            let alpha = rng.gen::<f64>() * 4.0 - 2.0;
            let scaled = x.mapv(|z| z * c(alpha, 0.0));
            assert!((trace_norm(&scaled).unwrap() - alpha.abs() * tx).abs() < 1e-9);
        }
    }

    #[test]
    fn trace_norm_rejects_non_hermitian() {
        let a = array![[c(0.0, 0.0), c(1.0, 0.0)], [c(0.0, 0.0), c(0.0, 0.0)]];
        assert!(matches!(trace_norm(&a), Err(LinalgError::NotHermitian { .. })));
    }

    #[test]
    fn fidelity_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let rho = random_density(4, &mut rng);
        assert!((fidelity(&rho, &rho).unwrap() - 1.0).abs() < 1e-9);

        let p0 = DensityMatrix::new(array![
            [c(1.0, 0.0), c(0.0, 0.0)],
            [c(0.0, 0.0), c(0.0, 0.0)]
        ])
        .unwrap();
        let p1 = DensityMatrix::new(array![
            [c(0.0, 0.0), c(0.0, 0.0)],
            [c(0.0, 0.0), c(1.0, 0.0)]
        ])
        .unwrap();
        assert!(fidelity(&p0, &p1).unwrap() < 1e-10);

        let plus = DensityMatrix::new(array![
            [c(0.5, 0.0), c(0.5, 0.0)],
            [c(0.5, 0.0), c(0.5, 0.0)]
        ])
        .unwrap();
        assert!((fidelity(&p0, &plus).unwrap() - 0.5).abs() < 1e-10);
    }

    #[test]
    fn fidelity_of_pure_states_is_squared_overlap() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..8 {
            /* Random pure qubit pair. */
            let mut psi = [c(rng.gen(), rng.gen()), c(rng.gen(), rng.gen())];
            let mut phi = [c(rng.gen(), rng.gen()), c(rng.gen(), rng.gen())];
            let npsi = (psi[0].norm_sqr() + psi[1].norm_sqr()).sqrt();
            let nphi = (phi[0].norm_sqr() + phi[1].norm_sqr()).sqrt();
            psi.iter_mut().for_each(|z| *z /= npsi);
            phi.iter_mut().for_each(|z| *z /= nphi);
            let proj = |v: &[C64; 2]| {
                DensityMatrix::new(array![
                    [v[0] * v[0].conj(), v[0] * v[1].conj()],
                    [v[1] * v[0].conj(), v[1] * v[1].conj()]
                ])
                .unwrap()
            };
            let overlap = (psi[0].conj() * phi[0] + psi[1].conj() * phi[1]).norm_sqr();
            let f = fidelity(&proj(&psi), &proj(&phi)).unwrap();
            assert!((f - overlap).abs() < 1e-9);
        }
    }

    #[test]
    fn spectrum_reconstruction_and_ordering() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        for dim in [2usize, 5, 16] {
            let h = random_hermitian(dim, &mut rng);
            let s = hermitian_spectrum(&h, &DEFAULT_TOLERANCES).unwrap();
            assert!(s.eigenvalues.windows(2).all(|w| w[0] <= w[1]), "ascending order");
            assert!(frobenius_norm(&(&s.reconstruct() - &h)) < 1e-9 * frobenius_norm(&h).max(1.0));
        }
    }

    #[test]
    fn spectrum_columns_are_eigenvectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let h = random_hermitian(6, &mut rng);
        let s = hermitian_spectrum(&h, &DEFAULT_TOLERANCES).unwrap();
        for (col, &l) in s.eigenvalues.iter().enumerate() {
            let v = s.eigenvectors.column(col).to_owned();
            let hv = h.dot(&v);
            let residual: f64 =
                hv.iter().zip(v.iter()).map(|(a, b)| (a - b * l).norm()).sum();
            assert!(residual < 1e-9, "column {col} residual {residual}");
        }
    }

    #[test]
    fn density_matrix_validation_rejects_bad_inputs() {
        let not_herm = array![[c(0.5, 0.0), c(0.3, 0.1)], [c(0.3, 0.2), c(0.5, 0.0)]];
        assert!(matches!(
            DensityMatrix::new(not_herm),
            Err(LinalgError::NotHermitian { .. })
        ));
        let bad_trace = identity(2);
        assert!(matches!(
            DensityMatrix::new(bad_trace),
            Err(LinalgError::TraceNotOne { .. })
        ));
        let negative = Array2::from_diag(&ndarray::arr1(&[c(1.5, 0.0), c(-0.5, 0.0)]));
        assert!(matches!(
            DensityMatrix::new(negative),
            Err(LinalgError::NotPositiveSemidefinite { .. })
        ));
    }

    #[test]
    fn purity_test_matches_eigenvalue_criterion() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let pure = DensityMatrix::new(array![
            [c(0.5, 0.0), c(0.0, -0.5)],
            [c(0.0, 0.5), c(0.5, 0.0)]
        ])
        .unwrap();
        assert!(pure.is_pure(&DEFAULT_TOLERANCES));
        let mixed = random_density(3, &mut rng);
        assert!(!mixed.is_pure(&DEFAULT_TOLERANCES));
    }
}
