//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) these fan work out over rayon;
//! without it they run plain iterators. Both paths produce bit-identical
//! results: order-preserving maps for per-item work, and fixed-size chunk
//! partials folded in a fixed order wherever floating-point accumulation
//! is involved, so the reduction tree never depends on thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk length for deterministic folds. Fixed so that chunk boundaries,
/// and therefore float summation order, never depend on the thread pool.
pub(crate) const FOLD_CHUNK: usize = 256;

/// Order-preserving map over a slice.
#[cfg(feature = "parallel")]
pub(crate) fn map_collect<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_collect<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Map fixed-size chunks to partial results. Callers fold the returned
/// partials sequentially, in order, which keeps non-associative
/// accumulation deterministic under any thread count.
#[cfg(feature = "parallel")]
pub(crate) fn chunk_partials<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&[T]) -> U + Sync + Send,
{
    items.par_chunks(FOLD_CHUNK).map(|c| f(c)).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn chunk_partials<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&[T]) -> U,
{
    items.chunks(FOLD_CHUNK).map(|c| f(c)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_collect_preserves_order() {
        let items: Vec<u32> = (0..1000).collect();
        let doubled = map_collect(&items, |x| x * 2);
        assert_eq!(doubled, items.iter().map(|x| x * 2).collect::<Vec<_>>());
    }

    #[test]
    fn chunk_partials_cover_all_items() {
        let items: Vec<u64> = (0..FOLD_CHUNK as u64 * 3 + 17).collect();
        let partials = chunk_partials(&items, |c| c.iter().sum::<u64>());
        let total: u64 = partials.iter().sum();
        assert_eq!(total, items.iter().sum::<u64>());
        assert_eq!(partials.len(), 4);
    }
}
