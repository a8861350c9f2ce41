use std::collections::HashMap;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::ProviderError;

/// Exponential backoff over retriable failures (transport, 429, 5xx).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_delay_ms: u64,
    pub max_delay_ms: u64,
    pub multiplier: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            initial_delay_ms: 1000,
            max_delay_ms: 30_000,
            multiplier: 2.0,
        }
    }
}

impl RetryPolicy {
    /// No sleeping between attempts; for tests and mocks.
    pub fn immediate() -> Self {
        RetryPolicy {
            initial_delay_ms: 0,
            max_delay_ms: 0,
            ..RetryPolicy::default()
        }
    }

    pub fn delay_before(&self, attempt: u32) -> Duration {
        let factor = self.multiplier.powi(attempt.saturating_sub(1) as i32);
        let ms = (self.initial_delay_ms as f64 * factor).min(self.max_delay_ms as f64);
        Duration::from_millis(ms as u64)
    }

    pub fn run<T>(&self, mut call: impl FnMut() -> Result<T, ProviderError>) -> Result<T, ProviderError> {
        let attempts = self.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            attempt += 1;
            match call() {
                Ok(v) => return Ok(v),
                Err(e) if e.is_retriable() && attempt < attempts => {
                    let delay = self.delay_before(attempt);
                    tracing::debug!(attempt, ?delay, "retrying provider call: {e}");
                    if !delay.is_zero() {
                        std::thread::sleep(delay);
                    }
                }
                Err(e) if e.is_retriable() => {
                    return Err(ProviderError::RetriesExhausted {
                        attempts,
                        last: Box::new(e),
                    })
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Counting semaphore per route: at most `capacity` calls in flight per bucket.
pub struct Limiter {
    capacity: usize,
    in_flight: Mutex<HashMap<String, usize>>,
    freed: Condvar,
}

pub struct Permit<'a> {
    limiter: &'a Limiter,
    route: String,
}

impl Limiter {
    pub fn new(capacity: usize) -> Self {
        Limiter {
            capacity: capacity.max(1),
            in_flight: Mutex::new(HashMap::new()),
            freed: Condvar::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn acquire(&self, route: &str) -> Permit<'_> {
        let mut map = self.in_flight.lock().expect("limiter poisoned");
        loop {
            let n = map.entry(route.to_string()).or_insert(0);
            if *n < self.capacity {
                *n += 1;
                break;
            }
            map = self.freed.wait(map).expect("limiter poisoned");
        }
        Permit {
            limiter: self,
            route: route.to_string(),
        }
    }

    pub fn in_flight(&self, route: &str) -> usize {
        self.in_flight
            .lock()
            .expect("limiter poisoned")
            .get(route)
            .copied()
            .unwrap_or(0)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut map = self.limiter.in_flight.lock().expect("limiter poisoned");
        if let Some(n) = map.get_mut(&self.route) {
            *n -= 1;
        }
        self.limiter.freed.notify_all();
    }
}
