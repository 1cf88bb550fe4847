//! Shared plumbing for the remote embedder, segmenter and VLM clients:
//! a bounded in-flight limiter and a JSON POST helper with retries.

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use thiserror::Error;

#[derive(Debug, Error)]
pub(crate) enum NetError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
}

/// Caps the number of requests in flight across all remote clients that
/// share a clone. Cheap to clone; callers block in `acquire` until a slot
/// frees up.
#[derive(Debug, Clone)]
pub struct SharedLimiter {
    inner: Arc<LimiterInner>,
}

#[derive(Debug)]
struct LimiterInner {
    limit: usize,
    state: Mutex<usize>,
    freed: Condvar,
}

pub struct LimiterGuard<'a> {
    inner: &'a LimiterInner,
}

impl SharedLimiter {
    /// A limiter allowing `limit` concurrent requests; `limit` 0 is treated
    /// as 1 so callers can never deadlock themselves.
    pub fn new(limit: usize) -> SharedLimiter {
        SharedLimiter {
            inner: Arc::new(LimiterInner {
                limit: limit.max(1),
                state: Mutex::new(0),
                freed: Condvar::new(),
            }),
        }
    }

    pub fn acquire(&self) -> LimiterGuard<'_> {
        let mut in_flight = self.inner.state.lock().expect("limiter poisoned");
        while *in_flight >= self.inner.limit {
            in_flight = self.inner.freed.wait(in_flight).expect("limiter poisoned");
        }
        *in_flight += 1;
        LimiterGuard { inner: &self.inner }
    }
}

impl Default for SharedLimiter {
    fn default() -> SharedLimiter {
        SharedLimiter::new(8)
    }
}

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        let mut in_flight = self.inner.state.lock().expect("limiter poisoned");
        *in_flight -= 1;
        self.inner.freed.notify_one();
    }
}

/// POSTs `body` as JSON and returns the parsed JSON response.
///
/// Transport errors and 5xx responses are retried up to `retries` extra
/// times with a short exponential backoff; 4xx responses are not, since
/// resending the same bad request cannot help.
pub(crate) fn post_json(
    client: &reqwest::blocking::Client,
    url: &str,
    auth_token: Option<&str>,
    body: &serde_json::Value,
    retries: u32,
    limiter: &SharedLimiter,
) -> Result<serde_json::Value, NetError> {
    let _slot = limiter.acquire();
    let attempts = retries + 1;
    let mut last_failure = String::new();
    for attempt in 0..attempts {
        if attempt > 0 {
            std::thread::sleep(Duration::from_millis(100 << (attempt - 1).min(4)));
        }
        let mut request = client.post(url).json(body);
        if let Some(token) = auth_token {
            request = request.bearer_auth(token);
        }
        match request.send() {
            Err(e) => last_failure = e.to_string(),
            Ok(response) => {
                let status = response.status();
                if status.is_server_error() {
                    last_failure = format!("HTTP {}", status.as_u16());
                    continue;
                }
                let text = match response.text() {
                    Ok(t) => t,
                    Err(e) => {
                        last_failure = format!("reading body: {e}");
                        continue;
                    }
                };
                if !status.is_success() {
                    return Err(NetError::Http {
                        status: status.as_u16(),
                        body: text,
                    });
                }
                return serde_json::from_str(&text).map_err(|e| NetError::Transport {
                    attempts: attempt + 1,
                    message: format!("response is not JSON: {e}"),
                });
            }
        }
    }
    Err(NetError::Transport {
        attempts,
        message: last_failure,
    })
}
