//! Worker-pool plumbing.
//!
//! The pool size is read once from the `QDLAB_THREADS` environment
//! variable (default: available parallelism). Every parallel reduction in
//! this crate collects into index order before combining, so results are
//! bitwise independent of the pool size; the variable only trades latency
//! for CPU use.

use std::sync::OnceLock;

/// Environment variable controlling the worker count.
pub const THREADS_ENV: &str = "QDLAB_THREADS";

static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
static BLAS_PIN: OnceLock<()> = OnceLock::new();

extern "C" {
    fn openblas_set_num_threads(n: i32);
}

/* BLAS-internal threading is pinned to one thread: the backend's own
 * reductions are not guaranteed to be order-stable across thread counts,
 * and all parallelism in this crate lives above the BLAS layer anyway. */
pub(crate) fn pin_blas_threads() {
    BLAS_PIN.get_or_init(|| unsafe { openblas_set_num_threads(1) });
}

/// Number of workers requested via [`THREADS_ENV`], if set and valid.
pub fn configured_workers() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
}

/// The crate-wide worker pool.
pub fn pool() -> &'static rayon::ThreadPool {
    POOL.get_or_init(|| {
        pin_blas_threads();
        let workers = configured_workers().unwrap_or_else(|| {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        });
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("worker pool construction")
    })
}

/// Runs `f` inside the crate-wide pool.
pub fn install<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    pool().install(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pool_is_usable() {
        let sum: u64 = install(|| {
            use rayon::prelude::*;
            (0..64u64).into_par_iter().map(|i| i * i).collect::<Vec<_>>().iter().sum()
        });
        assert_eq!(sum, (0..64u64).map(|i| i * i).sum());
    }
}
