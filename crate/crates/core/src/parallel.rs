//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature the closures run on the rayon pool, otherwise on
//! the calling thread. Work is always split into the same fixed-size blocks and
//! reduced in block order, so results are bit-identical either way.

use nalgebra::DMatrix;

/// Block size used by the reductions below.
pub const BLOCK: usize = 64;

/// Evaluates `f(i)` for `i in 0..n`, returning results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Sums `f(range)` over consecutive blocks of `0..n`.
pub fn sum_blocks<F>(n: usize, rows: usize, cols: usize, f: F) -> DMatrix<f64>
where
    F: Fn(std::ops::Range<usize>) -> DMatrix<f64> + Sync + Send,
{
    let n_blocks = n.div_ceil(BLOCK);
    let partials = map_indexed(n_blocks, |b| {
        let start = b * BLOCK;
        f(start..(start + BLOCK).min(n))
    });
    let mut acc = DMatrix::zeros(rows, cols);
    for p in partials {
        acc += p;
    }
    acc
}

/// Scalar counterpart of [`sum_blocks`].
pub fn sum_blocks_scalar<F>(n: usize, f: F) -> f64
where
    F: Fn(std::ops::Range<usize>) -> f64 + Sync + Send,
{
    let n_blocks = n.div_ceil(BLOCK);
    map_indexed(n_blocks, |b| {
        let start = b * BLOCK;
        f(start..(start + BLOCK).min(n))
    })
    .into_iter()
    .sum()
}
