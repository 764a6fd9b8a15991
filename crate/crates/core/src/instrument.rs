//! Per-thread operation counters used to verify complexity claims in tests
//! (e.g. that a mean-only look-ahead never factorizes a matrix). Counts are
//! recorded on the thread that performs the operation, so checks should run
//! with [`crate::Parallelism::Sequential`].

use std::cell::Cell;

thread_local! {
    static FACTORIZATIONS: Cell<usize> = const { Cell::new(0) };
    static NEWTON_SOLVES: Cell<usize> = const { Cell::new(0) };
    static COVARIANCE_UPDATES: Cell<usize> = const { Cell::new(0) };
    static MEAN_UPDATES: Cell<usize> = const { Cell::new(0) };
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counters {
    pub factorizations: usize,
    pub newton_solves: usize,
    pub covariance_updates: usize,
    pub mean_updates: usize,
}

impl Counters {
    pub fn since(self, earlier: Counters) -> Counters {
        Counters {
            factorizations: self.factorizations - earlier.factorizations,
            newton_solves: self.newton_solves - earlier.newton_solves,
            covariance_updates: self.covariance_updates - earlier.covariance_updates,
            mean_updates: self.mean_updates - earlier.mean_updates,
        }
    }
}

pub fn snapshot() -> Counters {
    Counters {
        factorizations: FACTORIZATIONS.with(Cell::get),
        newton_solves: NEWTON_SOLVES.with(Cell::get),
        covariance_updates: COVARIANCE_UPDATES.with(Cell::get),
        mean_updates: MEAN_UPDATES.with(Cell::get),
    }
}

pub(crate) fn factorization() {
    FACTORIZATIONS.with(|c| c.set(c.get() + 1));
}

pub(crate) fn newton_solve() {
    NEWTON_SOLVES.with(|c| c.set(c.get() + 1));
}

pub(crate) fn covariance_update() {
    COVARIANCE_UPDATES.with(|c| c.set(c.get() + 1));
}

pub(crate) fn mean_update() {
    MEAN_UPDATES.with(|c| c.set(c.get() + 1));
}
