use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use super::backend::{Backend, BackendError, BackendRequest};
use super::cache::{CacheKey, ResponseCache};
use super::clock::{Clock, SystemClock};
use super::config::{ModelConfig, Provider};
use super::mock::MockFixtures;
use super::rate_limit::RateLimiter;
use crate::error::{Error, Result};
use crate::prompting::PromptText;

/// One failed provider call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attempt {
    pub attempt: u32,
    pub error: String,
    /// Delay slept before the next attempt, if there was one.
    pub backoff_ms: Option<u64>,
}

/// Exponential backoff with full jitter: attempt `k` sleeps a uniform delay
/// in `[0, min(cap, base * 2^k)]`.
pub struct Backoff {
    base: Duration,
    cap: Duration,
    rng: Mutex<ChaCha8Rng>,
}

impl Backoff {
    pub fn new(base: Duration, cap: Duration, seed: u64) -> Self {
        Backoff {
            base,
            cap,
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    pub fn ceiling(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt.min(31)).unwrap_or(u32::MAX);
        self.base.saturating_mul(factor).min(self.cap)
    }

    pub fn delay(&self, attempt: u32) -> Duration {
        let unit = (self.rng.lock().unwrap().next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        self.ceiling(attempt).mul_f64(unit)
    }
}

impl Default for Backoff {
    fn default() -> Self {
        let seed = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_nanos() as u64)
            .unwrap_or(0);
        Backoff::new(Duration::from_secs(1), Duration::from_secs(60), seed)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClientStats {
    pub backend_calls: u64,
    pub cache_hits: u64,
    pub retries: u64,
}

/// Completion client shared by all workers of a run.
///
/// Every request is looked up in the response cache first. Misses go to the
/// backend through the per-model rate limiter, with retries on transient
/// failures; successes are appended to the cache before they are returned.
pub struct LlmClient {
    backend: Arc<dyn Backend>,
    cache: Arc<ResponseCache>,
    clock: Arc<dyn Clock>,
    backoff: Backoff,
    limiters: Mutex<HashMap<String, Arc<RateLimiter>>>,
    recorder: Option<Mutex<MockFixtures>>,
    backend_calls: AtomicU64,
    cache_hits: AtomicU64,
    retries: AtomicU64,
}

impl LlmClient {
    pub fn new(backend: Arc<dyn Backend>) -> Self {
        LlmClient {
            backend,
            cache: Arc::new(ResponseCache::in_memory()),
            clock: Arc::new(SystemClock::new()),
            backoff: Backoff::default(),
            limiters: Mutex::new(HashMap::new()),
            recorder: None,
            backend_calls: AtomicU64::new(0),
            cache_hits: AtomicU64::new(0),
            retries: AtomicU64::new(0),
        }
    }

    pub fn with_cache(mut self, cache: Arc<ResponseCache>) -> Self {
        self.cache = cache;
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_backoff(mut self, backoff: Backoff) -> Self {
        self.backoff = backoff;
        self
    }

    /// Keeps every returned response so it can be written out as mock fixtures.
    pub fn recording(mut self) -> Self {
        self.recorder = Some(Mutex::new(MockFixtures::default()));
        self
    }

    pub fn recorded(&self) -> MockFixtures {
        self.recorder
            .as_ref()
            .map(|r| r.lock().unwrap().clone())
            .unwrap_or_default()
    }

    pub fn stats(&self) -> ClientStats {
        ClientStats {
            backend_calls: self.backend_calls.load(Ordering::Relaxed),
            cache_hits: self.cache_hits.load(Ordering::Relaxed),
            retries: self.retries.load(Ordering::Relaxed),
        }
    }

    fn limiter(&self, config: &ModelConfig) -> Arc<RateLimiter> {
        self.limiters
            .lock()
            .unwrap()
            .entry(config.model_name.clone())
            .or_insert_with(|| {
                Arc::new(RateLimiter::new(
                    config.requests_per_minute,
                    self.clock.clone(),
                ))
            })
            .clone()
    }

    pub fn complete(
        &self,
        prompt: &PromptText,
        config: &ModelConfig,
        sample_index: u32,
    ) -> Result<String> {
        self.complete_traced(prompt, config, sample_index)
            .map(|(text, _)| text)
    }

    /// Like [`complete`](Self::complete), also returning the failed attempts
    /// that preceded success.
    pub fn complete_traced(
        &self,
        prompt: &PromptText,
        config: &ModelConfig,
        sample_index: u32,
    ) -> Result<(String, Vec<Attempt>)> {
        let digest = prompt.digest();
        let key = CacheKey::new(
            config.model_name.clone(),
            digest,
            config.temperature,
            sample_index,
        );
        if let Some(hit) = self.cache.get(&key) {
            self.cache_hits.fetch_add(1, Ordering::Relaxed);
            self.record(prompt, &hit);
            return Ok((hit, Vec::new()));
        }

        let req = BackendRequest {
            config,
            prompt: prompt.as_str(),
            digest,
            sample_index,
        };
        // the mock provider is local and not rate limited
        let limiter = (config.provider != Provider::Mock).then(|| self.limiter(config));
        let mut attempts = Vec::new();
        for attempt in 0..=config.max_retries {
            if let Some(l) = &limiter {
                l.acquire();
            }
            self.backend_calls.fetch_add(1, Ordering::Relaxed);
            let failure = match self.backend.call(&req) {
                Ok(text) => {
                    self.cache.insert(key, &text)?;
                    self.record(prompt, &text);
                    return Ok((text, attempts));
                }
                Err(BackendError::Transient(msg)) => msg,
                Err(BackendError::Auth(msg)) => {
                    return Err(Error::Config(format!(
                        "authentication failed for model `{}`: {msg}",
                        config.model_name
                    )))
                }
                Err(BackendError::FixtureMiss(d)) => {
                    return Err(Error::FixtureMiss { digest: d.to_hex() })
                }
                Err(BackendError::Fatal(msg)) => {
                    attempts.push(Attempt {
                        attempt,
                        error: msg.clone(),
                        backoff_ms: None,
                    });
                    return Err(Error::Transport {
                        message: msg,
                        attempts,
                    });
                }
            };
            let backoff = (attempt < config.max_retries).then(|| self.backoff.delay(attempt));
            attempts.push(Attempt {
                attempt,
                error: failure,
                backoff_ms: backoff.map(|d| d.as_millis() as u64),
            });
            if let Some(d) = backoff {
                self.retries.fetch_add(1, Ordering::Relaxed);
                self.clock.sleep(d);
            }
        }
        Err(Error::Transport {
            message: format!("retries exhausted for model `{}`", config.model_name),
            attempts,
        })
    }

    fn record(&self, prompt: &PromptText, response: &str) {
        if let Some(r) = &self.recorder {
            r.lock().unwrap().add(&prompt.digest(), response);
        }
    }

    /// Runs `jobs` with at most `max_in_flight` outstanding requests.
    /// Results are positional; a failed job does not affect the others.
    pub fn complete_many(
        &self,
        jobs: &[(PromptText, u32)],
        config: &ModelConfig,
        max_in_flight: usize,
    ) -> Vec<Result<String>> {
        let workers = max_in_flight.max(1).min(jobs.len());
        if workers <= 1 {
            return jobs
                .iter()
                .map(|(p, i)| self.complete(p, config, *i))
                .collect();
        }
        let next = AtomicUsize::new(0);
        let (tx, rx) = mpsc::channel();
        std::thread::scope(|s| {
            for _ in 0..workers {
                let tx = tx.clone();
                let next = &next;
                s.spawn(move || loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some((prompt, sample)) = jobs.get(i) else {
                        break;
                    };
                    let _ = tx.send((i, self.complete(prompt, config, *sample)));
                });
            }
        });
        drop(tx);
        let mut slots: Vec<Option<Result<String>>> = (0..jobs.len()).map(|_| None).collect();
        for (i, r) in rx {
            slots[i] = Some(r);
        }
        slots
            .into_iter()
            .map(|r| r.expect("every job produces a result"))
            .collect()
    }
}
