//! Data-parallel loops over node indices.
//!
//! With the `parallel` feature the loops run on rayon's pool; without it they
//! run sequentially. Reductions split the index range into fixed chunks, sum
//! each chunk in order and then sum the partials in order, so results are
//! bit-identical between the two builds and across thread counts.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Fixed reduction chunk. Changing it changes the last bits of every sum.
pub const CHUNK: usize = 4096;

/// Evaluates `f` at every index in `0..n`.
pub fn map<T, F>(n: usize, f: F) -> Vec<T>
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

/// Deterministic sum of `f(i)` over `0..n`.
pub fn sum<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let chunks = n.div_ceil(CHUNK);
    let partial = |c: usize| {
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(n);
        let mut acc = 0.0;
        for i in lo..hi {
            acc += f(i);
        }
        acc
    };
    map(chunks, partial).into_iter().sum()
}

/// Maximum of `f(i)` over `0..n` (0 for an empty range). NaN propagates.
pub fn max<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let chunks = n.div_ceil(CHUNK);
    let partial = |c: usize| {
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(n);
        let mut acc = 0.0_f64;
        for i in lo..hi {
            let v = f(i);
            if v.is_nan() || v > acc {
                acc = v;
            }
            if acc.is_nan() {
                break;
            }
        }
        acc
    };
    map(chunks, partial)
        .into_iter()
        .fold(0.0, |a, b| if b.is_nan() || b > a { b } else { a })
}

/// Applies `f(i, &mut out[i])` to every element.
pub fn for_each_mut<T, F>(out: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        out.par_iter_mut().enumerate().for_each(|(i, v)| f(i, v));
    }
    #[cfg(not(feature = "parallel"))]
    {
        out.iter_mut().enumerate().for_each(|(i, v)| f(i, v));
    }
}

/// Applies `f(chunk_index, chunk)` to consecutive chunks of `len` elements.
pub fn for_each_chunk_mut<T, F>(out: &mut [T], len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        out.par_chunks_mut(len)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        out.chunks_mut(len).enumerate().for_each(|(i, c)| f(i, c));
    }
}

/// Caps the global worker count. A no-op without the `parallel` feature.
pub fn init_threads(threads: Option<usize>) {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        // The global pool can only be built once per process.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_matches_chunked_sequential_order() {
        let n = 3 * CHUNK + 17;
        let f = |i: usize| 1.0 / (1.0 + i as f64);
        let mut expected = 0.0;
        for c in 0..n.div_ceil(CHUNK) {
            let mut acc = 0.0;
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                acc += f(i);
            }
            expected += acc;
        }
        assert_eq!(sum(n, f).to_bits(), expected.to_bits());
    }

    #[test]
    fn max_of_empty_is_zero() {
        assert_eq!(max(0, |_| 1.0), 0.0);
        assert_eq!(max(10, |i| i as f64), 9.0);
        assert!(max(10, |i| if i == 5 { f64::NAN } else { 1.0 }).is_nan());
    }
}
