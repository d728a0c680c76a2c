//! Execution policy for the data-parallel inner loops.
//!
//! Every parallel map collects its results in index order and the caller
//! reduces them sequentially, so the two policies produce bit-identical
//! values. Without the `parallel` feature both policies run sequentially.

use std::ops::Range;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
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

impl Exec {
    /// Maps `f` over `range`, returning results in index order.
    pub fn map_collect<T, F>(self, range: Range<usize>, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                range.into_par_iter().map(f).collect()
            }
            _ => range.map(f).collect(),
        }
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// Summation in a fixed left-to-right order. Switches to Kahan
/// compensation when the number of terms exceeds [`KAHAN_THRESHOLD`].
#[derive(Debug, Clone, Copy)]
pub struct OrderedSum {
    sum: f64,
    comp: f64,
    compensated: bool,
}

pub const KAHAN_THRESHOLD: usize = 10_000;

impl OrderedSum {
    pub fn new(expected_terms: usize) -> Self {
        OrderedSum {
            sum: 0.0,
            comp: 0.0,
            compensated: expected_terms > KAHAN_THRESHOLD,
        }
    }

    #[inline]
    pub fn add(&mut self, v: f64) {
        if self.compensated {
            let y = v - self.comp;
            let t = self.sum + y;
            self.comp = (t - self.sum) - y;
            self.sum = t;
        } else {
            self.sum += v;
        }
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}
