//! Data-parallel helpers. With the `parallel` feature off every call runs
//! sequentially; results are identical either way.

/// Execution strategy for index-parallel loops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// Whether parallel execution is compiled in.
    pub const fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }
}

/// `f(0), …, f(n−1)` collected in index order.
pub fn map_indices<T, F>(exec: Exec, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Minimum of `f` over `0..n` under a total order, first index on ties.
pub fn min_by_key_indexed<K, F>(exec: Exec, n: usize, chunk: usize, f: F) -> Option<(K, usize)>
where
    K: PartialOrd + Copy + Send,
    F: Fn(usize) -> Option<K> + Sync + Send,
{
    let chunk = chunk.max(1);
    let chunks = n.div_ceil(chunk);
    let partial = map_indices(exec, chunks, |c| {
        let mut best: Option<(K, usize)> = None;
        for i in c * chunk..((c + 1) * chunk).min(n) {
            if let Some(k) = f(i) {
                if best.is_none_or(|(b, _)| k < b) {
                    best = Some((k, i));
                }
            }
        }
        best
    });
    partial.into_iter().flatten().fold(None, |acc, (k, i)| match acc {
        Some((b, _)) if !(k < b) => acc,
        _ => Some((k, i)),
    })
}
