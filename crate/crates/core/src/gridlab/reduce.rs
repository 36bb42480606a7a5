use std::ops::Range;

use rayon::prelude::*;

const LEAF: usize = 512;

/// Deterministic parallel reduction over `0..len`.
///
/// The index range is cut into fixed leaves of `LEAF` elements whatever the
/// thread count; leaves are evaluated in parallel and then combined pairwise
/// in a fixed binary tree, so results are bit-identical across schedules.
pub fn tree_reduce<A, L, C>(len: usize, leaf: L, combine: C) -> Option<A>
where
    A: Send,
    L: Fn(Range<usize>) -> A + Sync,
    C: Fn(A, A) -> A,
{
    if len == 0 {
        return None;
    }
    let n_leaves = len.div_ceil(LEAF);
    let mut level: Vec<A> = (0..n_leaves)
        .into_par_iter()
        .map(|i| leaf(i * LEAF..((i + 1) * LEAF).min(len)))
        .collect();
    while level.len() > 1 {
        let mut next = Vec::with_capacity(level.len().div_ceil(2));
        let mut it = level.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(combine(a, b)),
                None => next.push(a),
            }
        }
        level = next;
    }
    level.pop()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sums_match_closed_form() {
        let s = tree_reduce(10_001, |r| r.map(|i| i as f64).sum::<f64>(), |a, b| a + b).unwrap();
        assert_eq!(s, 10_000.0 * 10_001.0 / 2.0);
    }

    #[test]
    fn empty_range_is_none() {
        assert!(tree_reduce(0, |_| 0.0, |a: f64, b| a + b).is_none());
    }

    #[test]
    fn independent_of_thread_count() {
        let f = |r: Range<usize>| r.map(|i| (i as f64 * 0.37).sin() / 3.0).sum::<f64>();
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let a = one.install(|| tree_reduce(100_003, f, |a, b| a + b).unwrap());
        let b = tree_reduce(100_003, f, |a, b| a + b).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
