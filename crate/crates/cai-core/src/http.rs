//! Shared plumbing for the remote model backends: a blocking JSON POST
//! client with bearer auth, a cap on in-flight requests, and a per-minute
//! request budget.

use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Bounds concurrent requests and enforces a requests-per-minute budget.
/// Shared by every remote backend instance that is handed a clone of it.
pub struct RequestGovernor {
    state: Mutex<GovernorState>,
    available: Condvar,
    max_in_flight: usize,
    requests_per_minute: Option<u32>,
}

struct GovernorState {
    in_flight: usize,
    window: VecDeque<Instant>,
}

impl RequestGovernor {
    pub fn new(max_in_flight: usize, requests_per_minute: Option<u32>) -> Self {
        Self {
            state: Mutex::new(GovernorState {
                in_flight: 0,
                window: VecDeque::new(),
            }),
            available: Condvar::new(),
            max_in_flight: max_in_flight.max(1),
            requests_per_minute,
        }
    }

    /// Block until a slot is free and the rate budget allows another request.
    pub fn acquire(&self) -> GovernorPermit<'_> {
        let mut state = self.state.lock().expect("governor lock");
        loop {
            while state.in_flight >= self.max_in_flight {
                state = self.available.wait(state).expect("governor wait");
            }
            if let Some(rpm) = self.requests_per_minute {
                let now = Instant::now();
                while let Some(front) = state.window.front() {
                    if now.duration_since(*front) >= Duration::from_secs(60) {
                        state.window.pop_front();
                    } else {
                        break;
                    }
                }
                if state.window.len() >= rpm as usize {
                    let wake = *state.window.front().expect("non-empty window")
                        + Duration::from_secs(60);
                    let wait = wake.saturating_duration_since(now);
                    let (s, _) = self
                        .available
                        .wait_timeout(state, wait)
                        .expect("governor wait");
                    state = s;
                    continue;
                }
                state.window.push_back(now);
            }
            state.in_flight += 1;
            return GovernorPermit { governor: self };
        }
    }

    pub fn in_flight(&self) -> usize {
        self.state.lock().expect("governor lock").in_flight
    }

    fn release(&self) {
        let mut state = self.state.lock().expect("governor lock");
        state.in_flight -= 1;
        drop(state);
        self.available.notify_all();
    }
}

/// RAII permit; releasing it frees the in-flight slot.
pub struct GovernorPermit<'a> {
    governor: &'a RequestGovernor,
}

impl Drop for GovernorPermit<'_> {
    fn drop(&mut self) {
        self.governor.release();
    }
}

/// Blocking JSON-over-HTTP client used by all remote backends.
pub struct JsonClient {
    client: reqwest::blocking::Client,
    url: String,
    token: Option<String>,
    backend: &'static str,
}

impl JsonClient {
    pub fn new(backend: &'static str, url: String, token: Option<String>) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| Error::backend(backend, e.to_string(), false))?;
        Ok(Self {
            client,
            url,
            token,
            backend,
        })
    }

    /// POST the body and decode the JSON response. Network failures, 5xx,
    /// and 429 are transient; other HTTP errors are permanent.
    pub fn post<B: Serialize, R: DeserializeOwned>(&self, body: &B) -> Result<R> {
        let mut req = self.client.post(&self.url).json(body);
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let resp = req
            .send()
            .map_err(|e| Error::backend(self.backend, e.to_string(), true))?;
        let status = resp.status();
        if !status.is_success() {
            let transient = status.is_server_error() || status.as_u16() == 429;
            let body = resp.text().unwrap_or_default();
            return Err(Error::backend(
                self.backend,
                format!("HTTP {status}: {}", body.trim()),
                transient,
            ));
        }
        resp.json()
            .map_err(|e| Error::backend(self.backend, format!("malformed response: {e}"), false))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    #[test]
    fn governor_caps_in_flight() {
        let gov = Arc::new(RequestGovernor::new(2, None));
        let peak = Arc::new(AtomicUsize::new(0));
        let mut handles = Vec::new();
        for _ in 0..8 {
            let gov = gov.clone();
            let peak = peak.clone();
            handles.push(std::thread::spawn(move || {
                let _permit = gov.acquire();
                let seen = gov.in_flight();
                peak.fetch_max(seen, Ordering::SeqCst);
                std::thread::sleep(Duration::from_millis(5));
            }));
        }
        for h in handles {
            h.join().unwrap();
        }
        assert!(peak.load(Ordering::SeqCst) <= 2);
        assert_eq!(gov.in_flight(), 0);
    }

    #[test]
    fn governor_slot_reused_after_release() {
        let gov = RequestGovernor::new(1, None);
        drop(gov.acquire());
        drop(gov.acquire());
        assert_eq!(gov.in_flight(), 0);
    }
}
