//! Data-parallel execution with a sequential fallback.
//!
//! Work is always split into the same chunks and results are returned in
//! chunk order, so reductions performed by the caller are identical in both
//! modes.

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExecMode {
    Sequential,
    /// Runs on the rayon pool; sequential when built without the
    /// `parallel` feature.
    Parallel,
}

impl Default for ExecMode {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            ExecMode::Parallel
        } else {
            ExecMode::Sequential
        }
    }
}

impl ExecMode {
    /// `f(0), .., f(n - 1)` in index order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            ExecMode::Parallel => {
                use rayon::prelude::*;
                (0..n).into_par_iter().map(f).collect()
            }
            _ => (0..n).map(f).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_and_keep_order() {
        let f = |i: usize| (i as f64).sqrt();
        let seq = ExecMode::Sequential.map(1000, f);
        let par = ExecMode::Parallel.map(1000, f);
        assert_eq!(seq, par);
        assert_eq!(seq[9], 3.0);
    }
}
