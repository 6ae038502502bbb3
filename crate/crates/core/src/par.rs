//! Data-parallel loops with a sequential fallback.
//!
//! With the `parallel` feature the helpers dispatch to rayon; without it they
//! run the same closures in order. Each output element is produced by exactly
//! one closure call with a fixed internal reduction order, so results are
//! bit-identical between the two builds and across thread counts.

/// Below this many scalar operations a loop runs sequentially even when the
/// `parallel` feature is enabled; task dispatch would dominate.
#[cfg_attr(not(feature = "parallel"), allow(dead_code))]
pub(crate) const MIN_PARALLEL_WORK: usize = 1 << 16;

/// Fills `out` in rows of `row_len`, calling `f(row_index, row)` once per row.
/// `work_per_row` is a rough operation count used against [`MIN_PARALLEL_WORK`].
pub(crate) fn for_each_row<F>(out: &mut [f64], row_len: usize, work_per_row: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Send + Sync,
{
    debug_assert!(row_len > 0 && out.len() % row_len == 0);
    #[cfg(feature = "parallel")]
    {
        let rows = out.len() / row_len;
        if rows.saturating_mul(work_per_row) >= MIN_PARALLEL_WORK {
            use rayon::prelude::*;
            out.par_chunks_mut(row_len)
                .enumerate()
                .for_each(|(i, row)| f(i, row));
            return;
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = work_per_row;
    out.chunks_mut(row_len)
        .enumerate()
        .for_each(|(i, row)| f(i, row));
}

/// Ordered map over `items`; the output order always matches the input order.
pub(crate) fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Send + Sync,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}
