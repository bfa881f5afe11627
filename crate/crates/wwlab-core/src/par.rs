//! Order-preserving parallel map.
//!
//! With the `parallel` feature the items run on the current rayon pool;
//! without it they run sequentially. Either way the returned vector is in
//! index order, and callers reduce it sequentially, which keeps results
//! independent of the number of worker threads.

use alloc::vec::Vec;

/// Evaluates `f(i)` for `i` in `0..n` and returns the results in order.
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

/// Like [`map_indexed`] for fallible work; the first error in index order
/// wins.
pub fn try_map_indexed<T, E, F>(n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    map_indexed(n, f).into_iter().collect()
}
