//! Injectable time sources. Everything that stamps a ledger entry or a log
//! line takes a [`Clock`] so tests can pin timestamps.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

pub trait Clock: Send + Sync {
    /// Current time in unix seconds.
    fn now(&self) -> u64;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
    }
}

/// Deterministic clock: starts at `start` and advances by `step` on every read.
#[derive(Debug)]
pub struct StepClock {
    next: AtomicU64,
    step: u64,
}

impl StepClock {
    pub fn new(start: u64, step: u64) -> Self {
        StepClock {
            next: AtomicU64::new(start),
            step,
        }
    }

    /// Value the next call to `now` will return.
    pub fn peek(&self) -> u64 {
        self.next.load(Ordering::SeqCst)
    }
}

impl Clock for StepClock {
    fn now(&self) -> u64 {
        self.next.fetch_add(self.step, Ordering::SeqCst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_clock_advances() {
        let c = StepClock::new(100, 5);
        assert_eq!(c.now(), 100);
        assert_eq!(c.now(), 105);
        assert_eq!(c.peek(), 110);
    }
}
