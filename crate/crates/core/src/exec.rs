//! Sequential and rayon-backed evaluation of independent work items.
//!
//! Items are always produced in index order and reductions are merged in a
//! fixed chunk order, so both modes return bitwise-identical results.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How per-projection work is scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Runs on the current rayon pool. Without the `parallel` feature this
    /// falls back to sequential evaluation.
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

/// Number of projections accumulated into one partial sum before merging.
pub(crate) const REDUCE_CHUNK: usize = 4;

/// `f(scratch, i)` for `i in 0..count`, collected in index order.
pub(crate) fn map_with_scratch<S, T, I, F>(exec: Execution, count: usize, init: I, f: F) -> Vec<T>
where
    T: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => (0..count).into_par_iter().map_init(&init, &f).collect(),
        _ => {
            let mut scratch = init();
            (0..count).map(|i| f(&mut scratch, i)).collect()
        }
    }
}

/// Accumulates `f(acc, scratch, i)` over `0..count` in chunks of
/// [`REDUCE_CHUNK`] and merges chunk accumulators left to right.
pub(crate) fn chunked_fold<A, S, IA, IS, F, M>(
    exec: Execution,
    count: usize,
    init_acc: IA,
    init_scratch: IS,
    f: F,
    merge: M,
) -> A
where
    A: Send,
    IA: Fn() -> A + Sync + Send,
    IS: Fn() -> S + Sync + Send,
    F: Fn(&mut A, &mut S, usize) + Sync + Send,
    M: Fn(&mut A, A),
{
    let chunks = count.div_ceil(REDUCE_CHUNK);
    let partials = map_with_scratch(exec, chunks, &init_scratch, |scratch, c| {
        let mut acc = init_acc();
        let end = ((c + 1) * REDUCE_CHUNK).min(count);
        for i in c * REDUCE_CHUNK..end {
            f(&mut acc, scratch, i);
        }
        acc
    });
    let mut iter = partials.into_iter();
    let mut total = iter.next().unwrap_or_else(&init_acc);
    for part in iter {
        merge(&mut total, part);
    }
    total
}
