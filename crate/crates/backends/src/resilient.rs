//! Retry with exponential backoff and a cap on in-flight requests.

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use fineforge_core::{InstructionTemplate, SourceDocument, TokenMatrix};

use crate::backend::ModelBackend;
use crate::error::BackendError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            retries: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

/// Counting semaphore.
#[derive(Debug)]
struct Permits {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Permits);

impl Permits {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

/// Wraps a backend so that at most `concurrency` requests are in flight and
/// transient failures are retried.
pub struct ResilientBackend<B> {
    inner: B,
    policy: RetryPolicy,
    permits: Permits,
}

impl<B: ModelBackend> ResilientBackend<B> {
    /// # Panics
    /// If `concurrency` is zero.
    pub fn new(inner: B, policy: RetryPolicy, concurrency: usize) -> Self {
        assert!(concurrency > 0, "concurrency must be positive");
        Self {
            inner,
            policy,
            permits: Permits::new(concurrency),
        }
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }

    fn call<T>(&self, mut f: impl FnMut(&B) -> Result<T, BackendError>) -> Result<T, BackendError> {
        let mut attempt = 0;
        loop {
            let result = {
                let _permit = self.permits.acquire();
                f(&self.inner)
            };
            match result {
                Err(e) if e.is_transient() && attempt < self.policy.retries => {
                    let wait = self.policy.delay(attempt);
                    tracing::debug!(error = %e, attempt, ?wait, "retrying backend call");
                    thread::sleep(wait);
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

impl<B: ModelBackend> ModelBackend for ResilientBackend<B> {
    fn genericize(&self, q: &str, step: usize, prev: Option<&str>) -> Result<String, BackendError> {
        self.call(|b| b.genericize(q, step, prev))
    }
    fn genericize_steps(&self) -> usize {
        self.inner.genericize_steps()
    }
    fn describe(&self, d: &str) -> Result<String, BackendError> {
        self.call(|b| b.describe(d))
    }
    fn embed(&self, t: &[String]) -> Result<Vec<Vec<f32>>, BackendError> {
        self.call(|b| b.embed(t))
    }
    fn embed_tokens(&self, t: &[String]) -> Result<Option<Vec<TokenMatrix>>, BackendError> {
        self.call(|b| b.embed_tokens(t))
    }
    fn instantiate(
        &self,
        t: &InstructionTemplate,
        d: &SourceDocument,
        k: usize,
    ) -> Result<String, BackendError> {
        self.call(|b| b.instantiate(t, d, k))
    }
    fn judge(&self, i: &str, a: &str) -> Result<String, BackendError> {
        self.call(|b| b.judge(i, a))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles_and_caps() {
        let p = RetryPolicy {
            retries: 5,
            base_delay: Duration::from_millis(10),
            max_delay: Duration::from_millis(50),
        };
        let d: Vec<u128> = (0..5).map(|a| p.delay(a).as_millis()).collect();
        assert_eq!(d, [10, 20, 40, 50, 50]);
        assert_eq!(p.delay(40), Duration::from_millis(50));
    }
}
