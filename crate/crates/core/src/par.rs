//! Execution strategy for the data-parallel kernels (grid
//! maximization, seed sweeps, integer enumeration). Built with the
//! `parallel` feature the kernels run on rayon; without it, or when
//! asked for `Exec::Sequential`, they run on the calling thread. The
//! two paths compute identical results: every kernel reduces with an
//! associative, order-independent merge.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Which path a kernel should take. `Exec::default()` picks Parallel
/// when the feature is compiled in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    /// Rayon work-stealing pool; silently degrades to sequential when
    /// the crate is built without the `parallel` feature.
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

/// Applies the `FG_THREADS` cap to the global rayon pool. Call once at
/// process start; subsequent calls (or an unset/invalid variable, or a
/// build without the `parallel` feature) are no-ops.
pub fn init_thread_cap_from_env() {
    #[cfg(feature = "parallel")]
    {
        if let Ok(raw) = std::env::var("FG_THREADS") {
            if let Ok(n) = raw.trim().parse::<usize>() {
                if n >= 1 {
                    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
                }
            }
        }
    }
}

pub(crate) fn map_indices<U, F>(n: usize, exec: Exec, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if exec == Exec::Parallel {
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    let _ = exec;
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_paths_agree() {
        let f = |i: usize| (i * i) as u64;
        let seq = map_indices(100, Exec::Sequential, f);
        let par = map_indices(100, Exec::Parallel, f);
        assert_eq!(seq, par);
    }
}
