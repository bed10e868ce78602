//! Data-parallel map helper: rayon when the `parallel` feature is enabled,
//! plain iteration otherwise. Results are collected in input order, so both
//! paths produce identical output.

use crate::complete::Execution;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `items` under the requested scheduling, preserving order.
#[cfg(feature = "parallel")]
pub(crate) fn dispatch<I, O, F>(exec: Execution, items: Vec<I>, f: F) -> Vec<O>
where
    I: Send,
    O: Send,
    F: Fn(I) -> O + Sync + Send,
{
    match exec {
        Execution::Parallel => items.into_par_iter().map(f).collect(),
        Execution::Sequential => items.into_iter().map(f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn dispatch<I, O, F>(_exec: Execution, items: Vec<I>, f: F) -> Vec<O>
where
    F: Fn(I) -> O,
{
    items.into_iter().map(f).collect()
}
