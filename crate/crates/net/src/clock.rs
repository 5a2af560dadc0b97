use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use pod_core::Round;

/// Source of the round number a replica stamps on its votes.
pub trait Clock: Send + Sync + 'static {
    fn now(&self) -> Round;
}

/// Milliseconds since the clock was created. Clones share the origin.
#[derive(Debug, Clone, Copy)]
pub struct MillisClock {
    origin: Instant,
}

impl MillisClock {
    pub fn new() -> Self {
        MillisClock { origin: Instant::now() }
    }
}

impl Default for MillisClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for MillisClock {
    fn now(&self) -> Round {
        self.origin.elapsed().as_millis() as Round
    }
}

/// Set by hand, for lock-step tests.
#[derive(Debug, Clone, Default)]
pub struct ManualClock(Arc<AtomicU64>);

impl ManualClock {
    pub fn set(&self, round: Round) {
        self.0.store(round, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Round {
        self.0.load(Ordering::SeqCst)
    }
}
