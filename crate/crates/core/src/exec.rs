//! Row-parallel execution with a sequential fallback.
//!
//! Every hot loop in the crate is "compute row `i` of something" with no
//! shared mutable state, so the only choice to make is whether the rows are
//! handed to rayon or walked in order. Results are bitwise identical either
//! way because each row is summed in a fixed order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How row-wise work is scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

#[allow(clippy::derivable_impls)]
impl Default for Execution {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        {
            Execution::Parallel
        }
        #[cfg(not(feature = "parallel"))]
        {
            Execution::Sequential
        }
    }
}

impl Execution {
    /// Fill `out` (laid out as consecutive rows of `row_len`) by calling
    /// `fill(row_index, row)` for every row.
    pub fn fill_rows<F>(self, out: &mut [f64], row_len: usize, fill: F)
    where
        F: Fn(usize, &mut [f64]) + Sync + Send,
    {
        if row_len == 0 {
            return;
        }
        match self {
            Execution::Sequential => out.chunks_mut(row_len).enumerate().for_each(|(i, row)| fill(i, row)),
            #[cfg(feature = "parallel")]
            Execution::Parallel => out.par_chunks_mut(row_len).enumerate().for_each(|(i, row)| fill(i, row)),
        }
    }

    /// Evaluate `f(i)` for `i in 0..n`, collecting in index order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Execution::Sequential => (0..n).map(f).collect(),
            #[cfg(feature = "parallel")]
            Execution::Parallel => (0..n).into_par_iter().map(f).collect(),
        }
    }
}
