//! Sliding-window request limiter shared by concurrent gateway callers.

use std::collections::VecDeque;
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

/// Admits at most `capacity` requests per `window`.
///
/// A cap of `r >= 1` requests per second becomes `floor(r)` per second; a cap
/// below one becomes a single request per `1/r` seconds. Either way no
/// one-second span ever sees more than `r` admissions.
#[derive(Debug)]
pub struct RateLimiter {
    capacity: usize,
    window: Duration,
    admitted: Mutex<VecDeque<Instant>>,
}

impl RateLimiter {
    /// Panics if `requests_per_second` is not a positive finite number.
    pub fn per_second(requests_per_second: f64) -> Self {
        assert!(
            requests_per_second.is_finite() && requests_per_second > 0.0,
            "requests_per_second must be positive, got {requests_per_second}"
        );
        let (capacity, window) = if requests_per_second >= 1.0 {
            (requests_per_second.floor().min(1e9) as usize, Duration::from_secs(1))
        } else {
            (1, Duration::from_secs_f64(1.0 / requests_per_second))
        };
        RateLimiter {
            capacity,
            window,
            admitted: Mutex::new(VecDeque::with_capacity(capacity.min(4096))),
        }
    }

    /// Blocks until the request may proceed.
    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut admitted = self.admitted.lock().unwrap_or_else(|e| e.into_inner());
                let now = Instant::now();
                while admitted.front().is_some_and(|t| now.duration_since(*t) >= self.window) {
                    admitted.pop_front();
                }
                if admitted.len() < self.capacity {
                    admitted.push_back(now);
                    return;
                }
                let oldest = *admitted.front().expect("window is full");
                self.window - now.duration_since(oldest)
            };
            thread::sleep(wait);
        }
    }
}
