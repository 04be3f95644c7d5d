//! Switch between rayon and plain iterators for the data-parallel loops.
//!
//! With the `parallel` feature disabled, [`Execution::Parallel`] silently
//! degrades to sequential execution so callers never need their own `cfg`s.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// True when work will actually be spread across threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    pub fn map<T, U, F>(self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    pub fn map_range<U, F>(self, range: std::ops::Range<usize>, f: F) -> Vec<U>
    where
        U: Send,
        F: Fn(usize) -> U + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return range.into_par_iter().map(f).collect();
        }
        range.map(f).collect()
    }

    /// Like [`Execution::map_range`] but splits the range into contiguous
    /// chunks; cheaper when `f` is tiny.
    pub fn map_range_chunked<U, F>(self, range: std::ops::Range<usize>, chunk: usize, f: F) -> Vec<U>
    where
        U: Send,
        F: Fn(usize) -> U + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            let chunk = chunk.max(1);
            let start = range.start;
            let len = range.len();
            let n_chunks = len.div_ceil(chunk);
            let parts: Vec<Vec<U>> = (0..n_chunks)
                .into_par_iter()
                .map(|c| {
                    let lo = start + c * chunk;
                    let hi = (lo + chunk).min(start + len);
                    (lo..hi).map(&f).collect()
                })
                .collect();
            return parts.into_iter().flatten().collect();
        }
        let _ = chunk;
        range.map(f).collect()
    }
}
