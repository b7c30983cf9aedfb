//! Data-parallel loop helpers with a sequential fallback.
//!
//! Every helper fixes the reduction order (per-row partials combined in row
//! order), so results are bit-identical with and without the `parallel`
//! feature and independent of thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Applies `f` to each `row_len`-sized chunk of `data`, passing the chunk index.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], row_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Send + Sync,
{
    debug_assert_eq!(data.len() % row_len, 0);
    #[cfg(feature = "parallel")]
    data.par_chunks_mut(row_len).enumerate().for_each(|(r, chunk)| f(r, chunk));
    #[cfg(not(feature = "parallel"))]
    data.chunks_mut(row_len).enumerate().for_each(|(r, chunk)| f(r, chunk));
}

/// Sums `f(row)` over `rows` rows. Partial results are accumulated in row
/// order regardless of scheduling.
pub fn sum_rows<F>(rows: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Send + Sync,
{
    #[cfg(feature = "parallel")]
    let partials: Vec<f64> = (0..rows).into_par_iter().map(f).collect();
    #[cfg(not(feature = "parallel"))]
    let partials: Vec<f64> = (0..rows).map(f).collect();
    partials.iter().sum()
}

/// Sequential twin of [`sum_rows`], kept callable from benches under any
/// feature set.
pub fn sum_rows_seq<F>(rows: usize, f: F) -> f64
where
    F: Fn(usize) -> f64,
{
    (0..rows).map(f).sum()
}

/// Sequential twin of [`for_each_chunk_mut`].
pub fn for_each_chunk_mut_seq<T, F>(data: &mut [T], row_len: usize, f: F)
where
    F: Fn(usize, &mut [T]),
{
    debug_assert_eq!(data.len() % row_len, 0);
    data.chunks_mut(row_len).enumerate().for_each(|(r, chunk)| f(r, chunk));
}
