use std::ops::{Add, AddAssign};
use std::sync::atomic::{AtomicU64, Ordering};

/// Storage accesses made by a query: payload/page bytes touched and seeks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct IoStats {
    pub bytes_read: u64,
    pub seeks: u64,
}

impl IoStats {
    pub(crate) fn record(&mut self, bytes: u64) {
        self.bytes_read += bytes;
        self.seeks += 1;
    }
}

impl Add for IoStats {
    type Output = IoStats;

    fn add(self, rhs: IoStats) -> IoStats {
        IoStats {
            bytes_read: self.bytes_read + rhs.bytes_read,
            seeks: self.seeks + rhs.seeks,
        }
    }
}

impl AddAssign for IoStats {
    fn add_assign(&mut self, rhs: IoStats) {
        *self = *self + rhs;
    }
}

/// Cumulative counters owned by an index, safe to bump from concurrent queries.
#[derive(Debug, Default)]
pub struct IoCounter {
    bytes_read: AtomicU64,
    seeks: AtomicU64,
}

impl IoCounter {
    pub fn add(&self, stats: IoStats) {
        self.bytes_read.fetch_add(stats.bytes_read, Ordering::Relaxed);
        self.seeks.fetch_add(stats.seeks, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> IoStats {
        IoStats {
            bytes_read: self.bytes_read.load(Ordering::Relaxed),
            seeks: self.seeks.load(Ordering::Relaxed),
        }
    }

    pub fn reset(&self) {
        self.bytes_read.store(0, Ordering::Relaxed);
        self.seeks.store(0, Ordering::Relaxed);
    }
}
