//! Execution-mode switch for candidate scans and independent trial loops.
//!
//! Both paths produce identical results: reductions use strict total orders
//! (ties are impossible), and mapped collections preserve input order. With the
//! `parallel` feature disabled, `Parallel` silently degrades to the sequential
//! path.

use std::cmp::Ordering;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parallelism {
    Sequential,
    Parallel,
}

impl Default for Parallelism {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Parallelism::Parallel
        } else {
            Parallelism::Sequential
        }
    }
}

/// Minimum of `eval` over a stream under a strict total order `cmp`.
pub(crate) fn min_by_total_order<I, T, F, C>(mode: Parallelism, items: I, eval: F, cmp: C) -> Option<T>
where
    I: Iterator + Send,
    I::Item: Send,
    T: Send,
    F: Fn(I::Item) -> T + Send + Sync,
    C: Fn(&T, &T) -> Ordering + Send + Sync,
{
    match mode {
        Parallelism::Sequential => items.map(eval).min_by(|a, b| cmp(a, b)),
        Parallelism::Parallel => {
            #[cfg(feature = "parallel")]
            {
                use rayon::prelude::*;
                items.par_bridge().map(eval).min_by(|a, b| cmp(a, b))
            }
            #[cfg(not(feature = "parallel"))]
            {
                items.map(eval).min_by(|a, b| cmp(a, b))
            }
        }
    }
}

/// Maps a vector element-wise, preserving positions.
pub(crate) fn map_indexed<T, U, F>(mode: Parallelism, items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Send + Sync,
{
    match mode {
        Parallelism::Sequential => items.into_iter().map(f).collect(),
        Parallelism::Parallel => {
            #[cfg(feature = "parallel")]
            {
                use rayon::prelude::*;
                items.into_par_iter().map(f).collect()
            }
            #[cfg(not(feature = "parallel"))]
            {
                items.into_iter().map(f).collect()
            }
        }
    }
}
