//! Deterministic data-parallel helpers.
//!
//! Work is split into fixed-size chunks that do not depend on the number of
//! worker threads, and partial results are combined by a fixed-shape pairwise
//! tree, so results are bit-identical for any pool size.

use rayon::prelude::*;

/// Items per work unit for chunked reductions.
pub const CHUNK: usize = 64;

/// Ordered parallel map over indices `0..n`.
pub fn map_indexed<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Reduces `0..n` by mapping fixed chunks to partial results and combining the
/// partials pairwise in index order.
pub fn chunked_tree_reduce<R, M, C>(n: usize, map_chunk: M, combine: C) -> Option<R>
where
    R: Send,
    M: Fn(std::ops::Range<usize>) -> R + Sync + Send,
    C: Fn(R, R) -> R,
{
    let chunks = n.div_ceil(CHUNK);
    let partials: Vec<R> =
        (0..chunks).into_par_iter().map(|c| map_chunk(c * CHUNK..((c + 1) * CHUNK).min(n))).collect();
    tree_reduce(partials, combine)
}

/// Pairwise reduction with a shape fixed by the input length.
pub fn tree_reduce<R, C>(mut items: Vec<R>, combine: C) -> Option<R>
where
    C: Fn(R, R) -> R,
{
    if items.is_empty() {
        return None;
    }
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(combine(a, b)),
                None => next.push(a),
            }
        }
        items = next;
    }
    items.pop()
}

/// Runs `f` inside a pool of `workers` threads (`None` = rayon default).
pub fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("thread pool construction")
            .install(f),
        None => f(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_reduce_is_independent_of_pool_size() {
        let values: Vec<f32> = (0..1000).map(|i| (i as f32 * 0.37).sin()).collect();
        let sum = |w| {
            with_workers(Some(w), || {
                chunked_tree_reduce(values.len(), |r| values[r].iter().sum::<f32>(), |a, b| a + b).unwrap()
            })
        };
        assert_eq!(sum(1).to_bits(), sum(4).to_bits());
    }

    #[test]
    fn empty_reduce() {
        assert_eq!(tree_reduce(Vec::<i32>::new(), |a, b| a + b), None);
        assert_eq!(tree_reduce(vec![1, 2, 3], |a, b| a + b), Some(6));
    }
}
