use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

/// Wall-clock deadline plus an optional shared cancellation flag. Solvers
/// poll it once per high-level expansion (and periodically inside low-level
/// searches).
#[derive(Debug, Clone, Default)]
pub struct StopSignal {
    deadline: Option<Instant>,
    cancel: Option<Arc<AtomicBool>>,
}

impl StopSignal {
    pub fn unlimited() -> Self {
        StopSignal::default()
    }

    pub fn after(budget: Duration) -> Self {
        StopSignal {
            deadline: Instant::now().checked_add(budget),
            cancel: None,
        }
    }

    pub fn with_cancel(mut self, flag: Arc<AtomicBool>) -> Self {
        self.cancel = Some(flag);
        self
    }

    #[inline]
    pub fn should_stop(&self) -> bool {
        if let Some(flag) = &self.cancel {
            if flag.load(Ordering::Relaxed) {
                return true;
            }
        }
        matches!(self.deadline, Some(d) if Instant::now() >= d)
    }

    pub fn is_cancelled(&self) -> bool {
        self.cancel.as_ref().is_some_and(|f| f.load(Ordering::Relaxed))
    }

    pub fn deadline(&self) -> Option<Instant> {
        self.deadline
    }
}
