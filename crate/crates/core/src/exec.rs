//! Execution strategy for per-node and per-sample work.
//!
//! Every reduction in the crate first maps work items to a `Vec` in index
//! order and then sums that vector in a fixed order, so a parallel
//! [`Executor`] yields bit-identical results to [`Sequential`].

use alloc::vec::Vec;

pub trait Executor: Sync {
    /// Evaluates `f(0..len)` and returns the results in index order.
    fn map_indexed<T, F>(&self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Single-threaded executor.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map_indexed<T, F>(&self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..len).map(f).collect()
    }
}
