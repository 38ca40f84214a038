//! Element-loop execution with an optional rayon backend.
//!
//! Parallel loops only ever produce per-index results; every reduction is
//! done afterwards in index order. Results are therefore bit-identical
//! between the sequential and the parallel backend and across thread counts.

use std::sync::atomic::{AtomicBool, Ordering};

static SEQUENTIAL: AtomicBool = AtomicBool::new(false);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Backend {
    Sequential,
    Parallel,
}

/// Select the backend for all subsequent loops in this process. Without the
/// `parallel` feature, `Parallel` behaves like `Sequential`.
pub fn set_backend(backend: Backend) {
    SEQUENTIAL.store(backend == Backend::Sequential, Ordering::Relaxed);
}

pub fn backend() -> Backend {
    if cfg!(feature = "parallel") && !SEQUENTIAL.load(Ordering::Relaxed) {
        Backend::Parallel
    } else {
        Backend::Sequential
    }
}

// Below this size the thread hand-off costs more than it saves.
const MIN_PARALLEL_LEN: usize = 2048;

/// `(0..n).map(f).collect()`.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if n >= MIN_PARALLEL_LEN && backend() == Backend::Parallel {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Fill `out[i] = f(i)`.
pub fn fill_indexed<T, F>(out: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if out.len() >= MIN_PARALLEL_LEN && backend() == Backend::Parallel {
        use rayon::prelude::*;
        out.par_iter_mut().enumerate().for_each(|(i, o)| *o = f(i));
        return;
    }
    for (i, o) in out.iter_mut().enumerate() {
        *o = f(i);
    }
}

/// Sum of `f(i)` over `0..n`, accumulated in index order.
pub fn sum_indexed<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    map_indexed(n, f).into_iter().sum()
}
