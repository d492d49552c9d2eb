//! Data-parallel building blocks.
//!
//! With the `parallel` feature (default) these fan out over the current rayon
//! pool; without it they run the same closures sequentially. Results are
//! identical either way because every closure writes a disjoint output slot.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Calls `f(row, row_slice)` for every `row_len`-sized chunk of `out`.
pub(crate) fn fill_rows<T, F>(out: &mut [T], row_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    if row_len == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    out.par_chunks_mut(row_len)
        .enumerate()
        .for_each(|(i, row)| f(i, row));
    #[cfg(not(feature = "parallel"))]
    out.chunks_mut(row_len)
        .enumerate()
        .for_each(|(i, row)| f(i, row));
}

/// Evaluates `f` on `0..n` and collects the results in index order.
pub(crate) fn map_indices<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Fallible variant of [`map_indices`]; the first error in index order wins.
pub(crate) fn try_map_indices<T, E, F>(n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    map_indices(n, f).into_iter().collect()
}

/// Whether kernels were compiled with rayon support.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
