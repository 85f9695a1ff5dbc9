//! Running independent trials, in parallel when the `parallel` feature is on.

/// How a batch of independent jobs is executed. Results always come back
/// in job order, so the choice never changes the output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Executor {
    Sequential,
    /// Rayon work stealing; sequential when built without `parallel`.
    #[default]
    Parallel,
}

impl Executor {
    pub fn map<T, F>(&self, jobs: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Executor::Sequential => (0..jobs).map(f).collect(),
            Executor::Parallel => parallel_map(jobs, f),
        }
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T: Send, F: Fn(usize) -> T + Sync + Send>(jobs: usize, f: F) -> Vec<T> {
    use rayon::prelude::*;
    (0..jobs).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T: Send, F: Fn(usize) -> T + Sync + Send>(jobs: usize, f: F) -> Vec<T> {
    (0..jobs).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let seq = Executor::Sequential.map(100, |i| i * i);
        let par = Executor::Parallel.map(100, |i| i * i);
        assert_eq!(seq, par);
    }
}
