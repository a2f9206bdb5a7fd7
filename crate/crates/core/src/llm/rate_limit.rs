use std::collections::VecDeque;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use super::clock::Clock;

const WINDOW: Duration = Duration::from_secs(60);

/// Shared request budget: at most `per_minute` request starts in any
/// 60-second window.
///
/// Keeps the start times of the last `per_minute` grants; a new grant waits
/// until the oldest one leaves the window. Bursts up to the full budget are
/// allowed.
pub struct RateLimiter {
    per_minute: usize,
    clock: Arc<dyn Clock>,
    starts: Mutex<VecDeque<Duration>>,
}

impl RateLimiter {
    pub fn new(per_minute: u32, clock: Arc<dyn Clock>) -> Self {
        RateLimiter {
            per_minute: per_minute.max(1) as usize,
            clock,
            starts: Mutex::new(VecDeque::new()),
        }
    }

    /// Blocks until a request may start, records the start and returns it.
    pub fn acquire(&self) -> Duration {
        loop {
            let wait = {
                let now = self.clock.now();
                let mut starts = self.starts.lock().unwrap();
                while let Some(&front) = starts.front() {
                    if now >= front + WINDOW {
                        starts.pop_front();
                    } else {
                        break;
                    }
                }
                if starts.len() < self.per_minute {
                    starts.push_back(now);
                    return now;
                }
                starts[0] + WINDOW - now
            };
            self.clock.sleep(wait);
        }
    }
}
