//! Index-parallel map. Uses rayon with the `parallel` feature and a plain
//! loop without it; results are always in index order.

/// Whether [`map_indexed`] fans out across threads.
pub const PARALLEL: bool = cfg!(feature = "parallel");

pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    map_with(PARALLEL, n, f)
}

/// Like [`map_indexed`], choosing the strategy at run time. Asking for
/// parallelism without the feature runs sequentially.
pub fn map_with<T, F>(parallel: bool, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = parallel;
    (0..n).map(f).collect()
}
