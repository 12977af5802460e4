//! Block-wise execution of grid kernels.
//!
//! Every kernel walks the flat cell array in fixed-size blocks. Reductions
//! produce one partial per block and the partials are merged in block order,
//! so results are bit-identical between sequential and parallel execution
//! and independent of the number of worker threads.

use std::ops::Range;

use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Execution policy for grid kernels.
///
/// `Parallel` silently degrades to sequential execution when the crate is
/// built without the `parallel` feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// Cell ranges of `len` split into blocks of `block_len`.
pub fn block_ranges(len: usize, block_len: usize) -> impl Iterator<Item = Range<usize>> + Clone {
    let block_len = block_len.max(1);
    (0..len.div_ceil(block_len)).map(move |b| b * block_len..((b + 1) * block_len).min(len))
}

/// Evaluates `f` on every block and returns the per-block results in order.
pub fn map_blocks<T, F>(exec: Exec, len: usize, block_len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, Range<usize>) -> T + Sync + Send,
{
    let ranges: Vec<Range<usize>> = block_ranges(len, block_len).collect();
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return ranges.into_par_iter().enumerate().map(|(b, r)| f(b, r)).collect();
    }
    let _ = exec;
    ranges.into_iter().enumerate().map(|(b, r)| f(b, r)).collect()
}

/// Runs `f(block, chunk)` over mutable blocks of `data`.
pub fn for_each_block_mut<F>(exec: Exec, block_len: usize, data: &mut [f64], f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    let block_len = block_len.max(1);
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        data.par_chunks_mut(block_len).enumerate().for_each(|(b, c)| f(b, c));
        return;
    }
    let _ = exec;
    data.chunks_mut(block_len).enumerate().for_each(|(b, c)| f(b, c));
}

/// Runs `f(block, a, b, c)` over matching blocks of two mutable and one
/// shared array. All arrays must have the same length.
pub fn for_each_block_mut2<F>(
    exec: Exec,
    block_len: usize,
    a: &mut [f64],
    b: &mut [f64],
    c: &[f64],
    f: F,
) where
    F: Fn(usize, &mut [f64], &mut [f64], &[f64]) + Sync + Send,
{
    assert_eq!(a.len(), b.len());
    assert_eq!(a.len(), c.len());
    let block_len = block_len.max(1);
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        a.par_chunks_mut(block_len)
            .zip(b.par_chunks_mut(block_len))
            .zip(c.par_chunks(block_len))
            .enumerate()
            .for_each(|(i, ((x, y), z))| f(i, x, y, z));
        return;
    }
    let _ = exec;
    a.chunks_mut(block_len)
        .zip(b.chunks_mut(block_len))
        .zip(c.chunks(block_len))
        .enumerate()
        .for_each(|(i, ((x, y), z))| f(i, x, y, z));
}

/// Runs `f` over every item of a small work list, in parallel when allowed.
pub fn map_items<I, T, F>(exec: Exec, items: Vec<I>, f: F) -> Vec<T>
where
    I: Send,
    T: Send,
    F: Fn(I) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return items.into_par_iter().map(f).collect();
    }
    let _ = exec;
    items.into_iter().map(f).collect()
}
