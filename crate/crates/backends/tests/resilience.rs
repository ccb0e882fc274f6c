use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use fineforge_backends::roles::judge;
use fineforge_backends::{BackendError, ModelBackend, ResilientBackend, RetryPolicy};

fn fast(retries: u32) -> RetryPolicy {
    RetryPolicy {
        retries,
        base_delay: Duration::from_millis(1),
        max_delay: Duration::from_millis(4),
    }
}

/// Fails the first `failures` calls with `error`, then answers "5".
struct Flaky {
    failures: usize,
    error: BackendError,
    calls: AtomicUsize,
}

impl ModelBackend for Flaky {
    fn judge(&self, _i: &str, _a: &str) -> Result<String, BackendError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        if n < self.failures {
            Err(self.error.clone())
        } else {
            Ok("5".into())
        }
    }
}

fn flaky(failures: usize, error: BackendError) -> Flaky {
    Flaky { failures, error, calls: AtomicUsize::new(0) }
}

#[test]
fn transient_errors_are_retried() {
    let b = ResilientBackend::new(flaky(2, BackendError::Http { status: 503, body: String::new() }), fast(3), 1);
    assert_eq!(judge(&b, "q", "a").unwrap().score, 5);
    assert_eq!(b.inner().calls.load(Ordering::SeqCst), 3);
}

#[test]
fn retries_exhausted_surface_the_error() {
    let b = ResilientBackend::new(flaky(10, BackendError::Timeout), fast(2), 1);
    let err = judge(&b, "q", "a").unwrap_err();
    assert_eq!(err.reason(), "backend_error");
    assert!(!err.is_fatal());
    assert_eq!(b.inner().calls.load(Ordering::SeqCst), 3);
}

#[test]
fn fatal_errors_are_not_retried() {
    let b = ResilientBackend::new(flaky(10, BackendError::Http { status: 401, body: String::new() }), fast(5), 1);
    assert!(judge(&b, "q", "a").unwrap_err().is_fatal());
    assert_eq!(b.inner().calls.load(Ordering::SeqCst), 1);
}

/// Tracks the peak number of concurrent calls.
#[derive(Default)]
struct Gauge {
    now: AtomicUsize,
    peak: AtomicUsize,
}

impl ModelBackend for Gauge {
    fn judge(&self, i: &str, _a: &str) -> Result<String, BackendError> {
        let n = self.now.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(n, Ordering::SeqCst);
        thread::sleep(Duration::from_millis(5));
        self.now.fetch_sub(1, Ordering::SeqCst);
        Ok(format!("{} ok", i.len() % 5 + 1))
    }
}

#[test]
fn in_flight_requests_are_bounded_and_results_keyed() {
    let b = Arc::new(ResilientBackend::new(Gauge::default(), fast(0), 3));
    let handles: Vec<_> = (0..24)
        .map(|i| {
            let b = Arc::clone(&b);
            thread::spawn(move || {
                let instruction = "x".repeat(i + 1);
                (i, judge(b.as_ref(), &instruction, "a").unwrap().score)
            })
        })
        .collect();
    for h in handles {
        let (i, score) = h.join().unwrap();
        assert_eq!(score as usize, (i + 1) % 5 + 1);
    }
    let peak = b.inner().peak.load(Ordering::SeqCst);
    assert!((1..=3).contains(&peak), "peak {peak}");
}
