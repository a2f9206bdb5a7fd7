//! Chat-completion client: remote providers, a deterministic offline mock,
//! retry with backoff, rate limiting and a persistent response cache.

mod backend;
mod cache;
mod client;
mod clock;
mod config;
mod mock;
mod rate_limit;

pub use backend::{
    Backend, BackendError, BackendRequest, GeminiBackend, HttpResponse, HttpTransport,
    OpenAiBackend, ProviderRouter, ReqwestTransport, GEMINI_API_KEY_ENV, OPENAI_API_KEY_ENV,
};
pub use cache::{CacheKey, CacheRecord, ResponseCache};
pub use client::{Attempt, Backoff, ClientStats, LlmClient};
pub use clock::{Clock, SimulatedClock, SystemClock};
pub use config::{ModelConfig, Provider};
pub use mock::{MockBackend, MockFixtures};
pub use rate_limit::RateLimiter;
