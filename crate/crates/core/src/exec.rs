//! Data-parallel helpers.
//!
//! With the `parallel` feature (default) the [`Threading::Parallel`] mode maps
//! work items through rayon; without it every call runs sequentially. Results
//! are always returned in input order, so parallel and sequential runs produce
//! bit-identical output.

/// Execution mode for the data-parallel loops of the solver.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Threading {
    Sequential,
    #[default]
    Parallel,
}

impl Threading {
    /// Whether this build can actually run work in parallel.
    pub fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }
}

/// Order-preserving map over a slice.
pub fn map_slice<T, R, F>(threading: Threading, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match threading {
        #[cfg(feature = "parallel")]
        Threading::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

/// Order-preserving map over `0..n`.
pub fn map_range<R, F>(threading: Threading, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    match threading {
        #[cfg(feature = "parallel")]
        Threading::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Order-preserving fallible map over `0..n`; returns the first error in index order.
pub fn try_map_range<R, E, F>(threading: Threading, n: usize, f: F) -> Result<Vec<R>, E>
where
    R: Send,
    E: Send,
    F: Fn(usize) -> Result<R, E> + Sync + Send,
{
    map_range(threading, n, f).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let items: Vec<u64> = (0..1000).collect();
        let a = map_slice(Threading::Sequential, &items, |x| x * x + 1);
        let b = map_slice(Threading::Parallel, &items, |x| x * x + 1);
        assert_eq!(a, b);
    }

    #[test]
    fn first_error_wins() {
        let r: Result<Vec<usize>, usize> =
            try_map_range(Threading::Parallel, 50, |i| if i % 7 == 3 { Err(i) } else { Ok(i) });
        assert_eq!(r, Err(3));
    }
}
