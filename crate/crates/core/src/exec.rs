//! Execution strategy for data-parallel loops.
//!
//! Every bulk loop in this crate (per-sample gradients, per-window evaluation,
//! per-sequence generation) maps a pure function over an index range and
//! collects results in index order. Reductions then run sequentially over the
//! ordered results, so `Parallel` and `Sequential` produce bitwise-identical
//! output.
//!
//! With the `parallel` feature disabled, `Parallel` degrades to the sequential
//! path.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        Exec::Parallel
    }
}

/// Map `f` over `0..n`, collecting results in index order.
pub fn map_indexed<U, F>(exec: Exec, n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    match exec {
        Exec::Sequential => (0..n).map(f).collect(),
        #[cfg(feature = "parallel")]
        Exec::Parallel => (0..n).into_par_iter().map(f).collect(),
        #[cfg(not(feature = "parallel"))]
        Exec::Parallel => (0..n).map(f).collect(),
    }
}

/// Map `f` over a slice, collecting results in input order.
pub fn map_slice<T, U, F>(exec: Exec, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    map_indexed(exec, items.len(), |i| f(&items[i]))
}
