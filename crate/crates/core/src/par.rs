//! Data-parallel helpers. With the `parallel` feature they fan out over the
//! rayon pool; without it they run sequentially. Either way results come
//! back in index order, so reductions done by the caller stay deterministic.

/// Below this many items the helpers stay on the calling thread.
pub const MIN_PARALLEL_ITEMS: usize = 64;

/// `(0..n).map(f).collect()`, possibly in parallel.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if n >= MIN_PARALLEL_ITEMS {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// `items.iter().map(f).collect()`, possibly in parallel.
pub fn map_slice<S, T, F>(items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if items.len() >= MIN_PARALLEL_ITEMS {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    items.iter().map(f).collect()
}

/// Index and value of the smallest `f(i)` over `0..n`; ties go to the lowest
/// index and NaN values are never selected. `None` when every value is NaN
/// or `n == 0`.
pub fn argmin_range<F>(n: usize, f: F) -> Option<(usize, f64)>
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    fn better(a: Option<(usize, f64)>, b: Option<(usize, f64)>) -> Option<(usize, f64)> {
        match (a, b) {
            (None, x) | (x, None) => x,
            (Some(a), Some(b)) => {
                if b.1 < a.1 || (b.1 == a.1 && b.0 < a.0) {
                    Some(b)
                } else {
                    Some(a)
                }
            }
        }
    }
    let lift = |i: usize| {
        let v = f(i);
        if v.is_nan() {
            None
        } else {
            Some((i, v))
        }
    };
    #[cfg(feature = "parallel")]
    if n >= MIN_PARALLEL_ITEMS {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(lift).reduce(|| None, better);
    }
    (0..n).map(lift).fold(None, better)
}

/// Number of worker threads the helpers may use.
pub fn num_threads() -> usize {
    #[cfg(feature = "parallel")]
    return rayon::current_num_threads();

    #[cfg(not(feature = "parallel"))]
    return 1;
}
