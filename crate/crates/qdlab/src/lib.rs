//! Numerical laboratory for pure-decoherence models of an open quantum
//! system: conditional (branch) environment states, information metrics
//! over environment fragments, Chernoff-bound machinery, and a discretized
//! scattered-photon environment.
//!
//! Layering, bottom up:
//!
//! * [`linalg`]: dense complex-matrix primitives (tensor products,
//!   partial traces, Hermitian spectra, entropies, fractional powers).
//! * [`model`]: the pure-decoherence Hamiltonian, conditional
//!   propagators, branch ensembles, and dense joint states.
//! * [`info`]: Holevo quantity, mutual information, Helstrom error,
//!   bound chain, fragment averaging, and redundancy search.
//! * [`chernoff`]: Chernoff overlaps, the typical Chernoff information,
//!   efficiency bounds, and empirical exponent fits.
//! * [`photon`]: equal-area sky partition, blackbody quadrature, and
//!   scattering-kernel records of a position observable.
//! * [`selftest`]: fast invariant suites runnable from the CLI.
//!
//! All numerical entry points are pure functions of immutable inputs and
//! are bit-deterministic for a fixed input regardless of worker count; see
//! [`threads`] for the worker-pool contract.

// Force linkage of the system BLAS/LAPACK backend.
extern crate blas_src as _;
extern crate openblas_src as _;

pub mod chernoff;
pub mod info;
pub mod linalg;
pub mod model;
pub mod photon;
pub mod selftest;
pub mod threads;
