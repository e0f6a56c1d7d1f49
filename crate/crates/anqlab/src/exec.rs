//! Data-parallel map over independent work items.
//!
//! Verifier trials, sweep cells, and seeded runs are independent by
//! construction, so they run through [`par_map`]. With the default `parallel`
//! feature this fans out on the rayon global pool; without it the same call
//! degrades to a plain sequential loop. Output order always matches input
//! order, so results are byte-identical either way.

/// Map `f` over `items`, in parallel when the `parallel` feature is enabled.
#[cfg(feature = "parallel")]
pub fn par_map<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Send + Sync,
{
    use rayon::prelude::*;
    items.into_par_iter().map(f).collect()
}

/// Sequential fallback used when the `parallel` feature is disabled.
#[cfg(not(feature = "parallel"))]
pub fn par_map<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Send + Sync,
{
    items.into_iter().map(f).collect()
}

/// Always-sequential map. Kept public so benchmarks can compare the two paths
/// on identical workloads.
pub fn seq_map<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    F: Fn(T) -> R,
{
    items.into_iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn par_map_preserves_order() {
        let xs: Vec<u64> = (0..1000).collect();
        let par = par_map(xs.clone(), |x| x * x);
        let seq = seq_map(xs, |x| x * x);
        assert_eq!(par, seq);
    }
}
