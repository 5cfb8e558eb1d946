//! Execution-mode switch for the data-parallel kernels.
//!
//! Row-partitioned kernels (sparse-dense products, dense products, edge
//! softmax, squared-adjacency construction) and sweep cells run on rayon
//! when the `parallel` feature is enabled and the mode is
//! [`ExecMode::Parallel`]. Every kernel computes each output row with the
//! same sequential summation order in both modes, so results are
//! bit-identical regardless of mode or thread count.

use std::sync::atomic::{AtomicU8, Ordering};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    Parallel,
}

const SEQUENTIAL: u8 = 0;
const PARALLEL: u8 = 1;

static MODE: AtomicU8 = AtomicU8::new(PARALLEL);

/// Work below this many output scalars always runs sequentially.
pub const MIN_PARALLEL_WORK: usize = 1 << 14;

pub fn set_mode(mode: ExecMode) {
    let v = match mode {
        ExecMode::Sequential => SEQUENTIAL,
        ExecMode::Parallel => PARALLEL,
    };
    MODE.store(v, Ordering::Relaxed);
}

/// Effective mode; always `Sequential` without the `parallel` feature.
pub fn mode() -> ExecMode {
    if cfg!(feature = "parallel") && MODE.load(Ordering::Relaxed) == PARALLEL {
        ExecMode::Parallel
    } else {
        ExecMode::Sequential
    }
}

fn go_parallel(work: usize) -> bool {
    work >= MIN_PARALLEL_WORK && mode() == ExecMode::Parallel
}

/// Calls `f(row_index, row)` for every `row_len`-sized chunk of `out`.
pub(crate) fn for_each_row<F>(out: &mut [f64], row_len: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    if row_len == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    if go_parallel(out.len()) {
        use rayon::prelude::*;
        out.par_chunks_mut(row_len)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
        return;
    }
    out.chunks_mut(row_len)
        .enumerate()
        .for_each(|(i, row)| f(i, row));
}

/// Evaluates `f(0..n)` and collects results in index order.
///
/// `work` is an estimate of the total cost used to decide whether to fan out.
pub(crate) fn map_indexed<T, F>(n: usize, work: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if go_parallel(work) {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = work;
    (0..n).map(f).collect()
}

/// Maps over independent coarse-grained tasks (sweep cells, seeds).
///
/// Unlike [`map_indexed`] there is no work threshold: each task is assumed
/// to be expensive.
pub fn map_tasks<I, T, F>(items: Vec<I>, f: F) -> Vec<T>
where
    I: Send,
    T: Send,
    F: Fn(I) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode() == ExecMode::Parallel {
        use rayon::prelude::*;
        return items.into_par_iter().map(f).collect();
    }
    items.into_iter().map(f).collect()
}

/// Runs `f` inside a dedicated pool of `threads` workers when parallel
/// execution is available; otherwise runs it directly.
pub fn with_threads<T, F>(threads: usize, f: F) -> T
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    #[cfg(feature = "parallel")]
    if threads > 0 {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            return pool.install(f);
        }
    }
    let _ = threads;
    f()
}
