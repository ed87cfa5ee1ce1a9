//! Execution mode switch for the data-parallel loops (analysis, synthesis,
//! kernel precomputation, oracle sweeps).
//!
//! With the `parallel` feature disabled every mode runs sequentially. Both
//! paths perform the same arithmetic in the same order per output element, so
//! results are bit-identical across modes.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// True when this mode will actually fan out over threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// Applies `f(chunk_index, chunk)` to consecutive `chunk_len`-sized chunks.
/// `init` creates per-worker scratch state.
pub fn for_each_chunk<T, S, I, F>(exec: Exec, data: &mut [T], chunk_len: usize, init: I, f: F)
where
    T: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, usize, &mut [T]) + Sync + Send,
{
    if chunk_len == 0 || data.is_empty() {
        return;
    }
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        data.par_chunks_mut(chunk_len)
            .enumerate()
            .for_each_init(&init, |s, (i, c)| f(s, i, c));
        return;
    }
    let _ = exec;
    let mut s = init();
    for (i, c) in data.chunks_mut(chunk_len).enumerate() {
        f(&mut s, i, c);
    }
}

/// Ordered map over `0..n`.
pub fn map_range<R, F>(exec: Exec, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}
