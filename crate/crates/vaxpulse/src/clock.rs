//! Time source abstraction so pacing and backoff are testable without
//! real sleeps.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};

/// Monotonic clock with a blocking sleep.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
    fn sleep_ms(&self, ms: u64);
}

/// Wall-clock implementation backed by [`Instant`].
pub struct SystemClock {
    origin: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        Self {
            origin: Instant::now(),
        }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        self.origin.elapsed().as_millis() as u64
    }

    fn sleep_ms(&self, ms: u64) {
        std::thread::sleep(Duration::from_millis(ms));
    }
}

/// Deterministic clock for tests: `sleep_ms` advances time instead of
/// blocking.
pub struct VirtualClock {
    now: AtomicU64,
}

impl VirtualClock {
    pub fn new() -> Self {
        Self {
            now: AtomicU64::new(0),
        }
    }
}

impl Default for VirtualClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for VirtualClock {
    fn now_ms(&self) -> u64 {
        self.now.load(Ordering::SeqCst)
    }

    fn sleep_ms(&self, ms: u64) {
        self.now.fetch_add(ms, Ordering::SeqCst);
    }
}

const WINDOW_MS: u64 = 60_000;

/// Sliding-window limiter: at most `per_minute` acquisitions in any
/// 60-second window.
pub struct RateLimiter {
    per_minute: u32,
    window: VecDeque<u64>,
}

impl RateLimiter {
    pub fn new(per_minute: u32) -> Self {
        assert!(per_minute >= 1, "rate limit must be at least 1/min");
        Self {
            per_minute,
            window: VecDeque::new(),
        }
    }

    /// Blocks (via the clock) until a request slot is available, then
    /// records the request.
    pub fn acquire(&mut self, clock: &dyn Clock) {
        let mut now = clock.now_ms();
        self.evict(now);
        if self.window.len() >= self.per_minute as usize {
            let oldest = *self.window.front().expect("window non-empty");
            let wake = oldest + WINDOW_MS;
            if wake > now {
                clock.sleep_ms(wake - now);
            }
            now = clock.now_ms();
            self.evict(now);
        }
        self.window.push_back(now);
    }

    fn evict(&mut self, now: u64) {
        while let Some(&t) = self.window.front() {
            if now.saturating_sub(t) >= WINDOW_MS {
                self.window.pop_front();
            } else {
                break;
            }
        }
    }
}

/// Exponential backoff with full jitter: attempt `k` (1-based) sleeps a
/// uniform draw from `[0, base * factor^(k-1))`.
pub struct BackoffPolicy {
    pub base_ms: u64,
    pub factor: f64,
    pub max_attempts: u32,
    rng: SmallRng,
}

impl BackoffPolicy {
    pub fn new(seed: u64) -> Self {
        Self {
            base_ms: 1_000,
            factor: 2.0,
            max_attempts: 5,
            rng: SmallRng::seed_from_u64(seed),
        }
    }

    /// Sleep before retrying `attempt` (the attempt that just failed,
    /// 1-based).
    pub fn backoff(&mut self, attempt: u32, clock: &dyn Clock) {
        let cap = (self.base_ms as f64) * self.factor.powi(attempt.saturating_sub(1) as i32);
        let delay = self.rng.random_range(0.0..cap.max(1.0));
        clock.sleep_ms(delay as u64);
    }
}
