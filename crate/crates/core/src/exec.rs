//! How independent work items (Monte Carlo samples) are scheduled.

use crate::error::Result;
#[cfg(feature = "parallel")]
use crate::error::Error;

/// Scheduling strategy. Outputs never depend on the choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Rayon work stealing; `threads: None` uses the global pool.
    #[cfg(feature = "parallel")]
    Parallel { threads: Option<usize> },
}

impl Default for Execution {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        {
            Execution::Parallel { threads: None }
        }
        #[cfg(not(feature = "parallel"))]
        {
            Execution::Sequential
        }
    }
}

impl Execution {
    /// Parallel with a fixed thread count when available, otherwise sequential.
    pub fn with_threads(threads: usize) -> Self {
        #[cfg(feature = "parallel")]
        {
            Execution::Parallel {
                threads: Some(threads.max(1)),
            }
        }
        #[cfg(not(feature = "parallel"))]
        {
            let _ = threads;
            Execution::Sequential
        }
    }

    /// Evaluates `f(0..n)` and returns the results in index order. If several
    /// items fail, the error of the lowest index is returned.
    pub fn map<T, F>(&self, n: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Sync + Send,
    {
        let results: Vec<Result<T>> = match *self {
            Execution::Sequential => (0..n).map(&f).collect(),
            #[cfg(feature = "parallel")]
            Execution::Parallel { threads } => {
                use rayon::prelude::*;
                let run = || (0..n).into_par_iter().map(&f).collect::<Vec<_>>();
                match threads {
                    None => run(),
                    Some(t) => rayon::ThreadPoolBuilder::new()
                        .num_threads(t)
                        .build()
                        .map_err(|e| Error::Parameter(format!("thread pool: {e}")))?
                        .install(run),
                }
            }
        };
        results.into_iter().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn order_and_first_error() {
        let square = |i: usize| Ok(i * i);
        let seq = Execution::Sequential.map(50, square).unwrap();
        assert_eq!(seq, (0..50).map(|i| i * i).collect::<Vec<_>>());
        assert_eq!(Execution::with_threads(3).map(50, square).unwrap(), seq);
        assert_eq!(Execution::default().map(50, square).unwrap(), seq);

        let failing = |i: usize| {
            if i % 7 == 3 {
                Err(Error::Parameter(format!("{i}")))
            } else {
                Ok(i)
            }
        };
        for exec in [Execution::Sequential, Execution::with_threads(4)] {
            match exec.map(40, failing) {
                Err(Error::Parameter(m)) => assert_eq!(m, "3"),
                other => panic!("unexpected {other:?}"),
            }
        }
    }
}
