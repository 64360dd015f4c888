//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) these fan out over rayon; without
//! it, or when [`Parallelism::Sequential`] is requested, they run in order
//! on the calling thread. Results are identical either way: outputs are
//! collected by index and every closure receives its own index.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parallelism {
    Sequential,
    #[default]
    Parallel,
}

impl Parallelism {
    /// Whether the parallel path is actually available in this build.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Parallelism::Parallel
    }
}

/// `(0..n).map(f).collect()`, possibly in parallel, order preserved.
pub fn map_indexed<T, F>(n: usize, mode: Parallelism, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = mode;
    (0..n).map(f).collect()
}

/// Calls `f(chunk_index, chunk)` on consecutive `chunk`-sized pieces.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, mode: Parallelism, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    assert!(chunk > 0);
    #[cfg(feature = "parallel")]
    if mode.is_parallel() && data.len() >= 2 * chunk && data.len() >= 1 << 12 {
        use rayon::prelude::*;
        data.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
        return;
    }
    let _ = mode;
    data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

/// `f(chunk_index, chunk)` for each `chunk`-sized piece, order preserved.
pub fn map_chunks<T, R, F>(data: &[T], chunk: usize, mode: Parallelism, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &[T]) -> R + Sync + Send,
{
    assert!(chunk > 0);
    #[cfg(feature = "parallel")]
    if mode.is_parallel() && data.len() >= 2 * chunk && data.len() >= 1 << 12 {
        use rayon::prelude::*;
        return data.par_chunks(chunk).enumerate().map(|(i, c)| f(i, c)).collect();
    }
    let _ = mode;
    data.chunks(chunk).enumerate().map(|(i, c)| f(i, c)).collect()
}

/// Sum of `f(i)` over `0..n`. The parallel reduction tree may reorder
/// floating-point additions, so callers needing bit-identical sums across
/// modes should reduce integer or exact quantities only.
pub fn sum_indexed<F>(n: usize, mode: Parallelism, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() && n >= 1 << 12 {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).sum();
    }
    let _ = mode;
    (0..n).map(f).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let a = map_indexed(1000, Parallelism::Sequential, |i| i * i);
        let b = map_indexed(1000, Parallelism::Parallel, |i| i * i);
        assert_eq!(a, b);

        let mut x = vec![1u64; 1 << 14];
        let mut y = x.clone();
        for_each_chunk_mut(&mut x, 64, Parallelism::Sequential, |i, c| c.iter_mut().for_each(|v| *v += i as u64));
        for_each_chunk_mut(&mut y, 64, Parallelism::Parallel, |i, c| c.iter_mut().for_each(|v| *v += i as u64));
        assert_eq!(x, y);
    }
}
