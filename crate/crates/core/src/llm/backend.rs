use std::collections::HashMap;
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use serde_json::{json, Value};

use super::config::{ModelConfig, Provider};
use super::mock::{MockBackend, MockFixtures};
use crate::error::{Error, Result};
use crate::prompting::PromptDigest;

pub const OPENAI_API_KEY_ENV: &str = "OPENAI_API_KEY";
pub const GEMINI_API_KEY_ENV: &str = "GEMINI_API_KEY";

const OPENAI_BASE_URL: &str = "https://api.openai.com/v1";
const GEMINI_BASE_URL: &str = "https://generativelanguage.googleapis.com/v1beta";

/// A single completion request as seen by a provider.
#[derive(Debug, Clone, Copy)]
pub struct BackendRequest<'a> {
    pub config: &'a ModelConfig,
    pub prompt: &'a str,
    pub digest: PromptDigest,
    pub sample_index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendError {
    /// Rate limited, server error or network failure; worth retrying.
    Transient(String),
    /// Credentials rejected.
    Auth(String),
    /// Any other failure; retrying will not help.
    Fatal(String),
    FixtureMiss(PromptDigest),
}

/// One provider call, without caching or retries.
pub trait Backend: Send + Sync {
    fn call(&self, req: &BackendRequest<'_>) -> Result<String, BackendError>;
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn call(&self, req: &BackendRequest<'_>) -> Result<String, BackendError> {
        (**self).call(req)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

/// Minimal JSON POST transport. `Err` means the request never got a response.
pub trait HttpTransport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        headers: &[(&str, String)],
        body: &Value,
    ) -> Result<HttpResponse, String>;
}

pub struct ReqwestTransport {
    client: OnceLock<std::result::Result<reqwest::blocking::Client, String>>,
    timeout: Duration,
}

impl ReqwestTransport {
    pub fn new(timeout: Duration) -> Self {
        ReqwestTransport {
            client: OnceLock::new(),
            timeout,
        }
    }

    fn client(&self) -> Result<&reqwest::blocking::Client, String> {
        self.client
            .get_or_init(|| {
                reqwest::blocking::Client::builder()
                    .timeout(self.timeout)
                    .build()
                    .map_err(|e| e.to_string())
            })
            .as_ref()
            .map_err(Clone::clone)
    }
}

impl Default for ReqwestTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(120))
    }
}

impl HttpTransport for ReqwestTransport {
    fn post_json(
        &self,
        url: &str,
        headers: &[(&str, String)],
        body: &Value,
    ) -> Result<HttpResponse, String> {
        let mut req = self
            .client()?
            .post(url)
            .header("content-type", "application/json")
            .body(serde_json::to_vec(body).map_err(|e| e.to_string())?);
        for (k, v) in headers {
            req = req.header(*k, v);
        }
        let resp = req.send().map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| e.to_string())?;
        Ok(HttpResponse { status, body })
    }
}

fn classify(resp: &HttpResponse) -> Result<(), BackendError> {
    let snippet = || {
        let mut s: String = resp.body.chars().take(300).collect();
        if s.len() < resp.body.len() {
            s.push('…');
        }
        format!("HTTP {}: {s}", resp.status)
    };
    match resp.status {
        200..=299 => Ok(()),
        401 | 403 => Err(BackendError::Auth(snippet())),
        408 | 409 | 429 | 500..=599 => Err(BackendError::Transient(snippet())),
        _ => Err(BackendError::Fatal(snippet())),
    }
}

fn parse_body(body: &str) -> Result<Value, BackendError> {
    serde_json::from_str(body)
        .map_err(|e| BackendError::Fatal(format!("malformed response body: {e}")))
}

/// Chat-completions dialect (`/chat/completions`, bearer auth).
pub struct OpenAiBackend {
    transport: Arc<dyn HttpTransport>,
    api_key: String,
}

impl OpenAiBackend {
    pub fn new(transport: Arc<dyn HttpTransport>, api_key: impl Into<String>) -> Self {
        OpenAiBackend {
            transport,
            api_key: api_key.into(),
        }
    }

    pub fn request_body(req: &BackendRequest<'_>) -> Value {
        let mut body = json!({
            "model": req.config.model_name,
            "messages": [{"role": "user", "content": req.prompt}],
            "temperature": req.config.temperature,
            "max_tokens": req.config.max_output_tokens,
        });
        if req.config.deterministic() {
            body["top_p"] = json!(1);
            body["seed"] = json!(0);
        }
        body
    }

    pub fn parse_response(body: &str) -> Result<String, BackendError> {
        let v = parse_body(body)?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| BackendError::Fatal("response has no choices[0].message.content".into()))
    }
}

impl Backend for OpenAiBackend {
    fn call(&self, req: &BackendRequest<'_>) -> Result<String, BackendError> {
        let base = req.config.base_url.as_deref().unwrap_or(OPENAI_BASE_URL);
        let url = format!("{}/chat/completions", base.trim_end_matches('/'));
        let headers = [("authorization", format!("Bearer {}", self.api_key))];
        let resp = self
            .transport
            .post_json(&url, &headers, &Self::request_body(req))
            .map_err(BackendError::Transient)?;
        classify(&resp)?;
        Self::parse_response(&resp.body)
    }
}

/// `generateContent` dialect (API key header, `contents`/`parts` shape).
pub struct GeminiBackend {
    transport: Arc<dyn HttpTransport>,
    api_key: String,
}

impl GeminiBackend {
    pub fn new(transport: Arc<dyn HttpTransport>, api_key: impl Into<String>) -> Self {
        GeminiBackend {
            transport,
            api_key: api_key.into(),
        }
    }

    pub fn request_body(req: &BackendRequest<'_>) -> Value {
        let mut generation = json!({
            "temperature": req.config.temperature,
            "maxOutputTokens": req.config.max_output_tokens,
        });
        if req.config.deterministic() {
            generation["topK"] = json!(1);
        }
        json!({
            "contents": [{"role": "user", "parts": [{"text": req.prompt}]}],
            "generationConfig": generation,
        })
    }

    pub fn parse_response(body: &str) -> Result<String, BackendError> {
        let v = parse_body(body)?;
        let parts = v
            .pointer("/candidates/0/content/parts")
            .and_then(Value::as_array)
            .ok_or_else(|| {
                BackendError::Fatal("response has no candidates[0].content.parts".into())
            })?;
        Ok(parts
            .iter()
            .filter_map(|p| p.get("text").and_then(Value::as_str))
            .collect::<String>())
    }
}

impl Backend for GeminiBackend {
    fn call(&self, req: &BackendRequest<'_>) -> Result<String, BackendError> {
        let base = req.config.base_url.as_deref().unwrap_or(GEMINI_BASE_URL);
        let url = format!(
            "{}/models/{}:generateContent",
            base.trim_end_matches('/'),
            req.config.model_name
        );
        let headers = [("x-goog-api-key", self.api_key.clone())];
        let resp = self
            .transport
            .post_json(&url, &headers, &Self::request_body(req))
            .map_err(BackendError::Transient)?;
        classify(&resp)?;
        Self::parse_response(&resp.body)
    }
}

/// Dispatches each request to the backend for its model's provider.
#[derive(Default)]
pub struct ProviderRouter {
    openai: Option<OpenAiBackend>,
    gemini: Option<GeminiBackend>,
    mocks: HashMap<String, MockBackend>,
}

impl ProviderRouter {
    /// Builds backends for `models`, reading API keys from the environment
    /// and fixtures from disk. A missing key is a configuration error.
    pub fn from_models(models: &[ModelConfig], transport: Arc<dyn HttpTransport>) -> Result<Self> {
        Self::from_models_with_env(models, transport, |k| std::env::var(k).ok())
    }

    pub fn from_models_with_env(
        models: &[ModelConfig],
        transport: Arc<dyn HttpTransport>,
        env: impl Fn(&str) -> Option<String>,
    ) -> Result<Self> {
        let key = |name: &str| {
            env(name)
                .filter(|v| !v.trim().is_empty())
                .ok_or_else(|| Error::Config(format!("environment variable {name} is not set")))
        };
        let mut router = ProviderRouter::default();
        for m in models {
            m.validate()?;
            match m.provider {
                Provider::OpenAi if router.openai.is_none() => {
                    router.openai = Some(OpenAiBackend::new(
                        transport.clone(),
                        key(OPENAI_API_KEY_ENV)?,
                    ));
                }
                Provider::Gemini if router.gemini.is_none() => {
                    router.gemini = Some(GeminiBackend::new(
                        transport.clone(),
                        key(GEMINI_API_KEY_ENV)?,
                    ));
                }
                Provider::Mock => {
                    let path = m.fixtures.as_ref().expect("validated");
                    router.mocks.insert(
                        m.model_name.clone(),
                        MockBackend::new(MockFixtures::load(path)?),
                    );
                }
                _ => {}
            }
        }
        Ok(router)
    }

    pub fn with_mock(mut self, model_name: impl Into<String>, fixtures: MockFixtures) -> Self {
        self.mocks
            .insert(model_name.into(), MockBackend::new(fixtures));
        self
    }
}

impl Backend for ProviderRouter {
    fn call(&self, req: &BackendRequest<'_>) -> Result<String, BackendError> {
        let unconfigured = || {
            BackendError::Fatal(format!(
                "no backend configured for model `{}`",
                req.config.model_name
            ))
        };
        match req.config.provider {
            Provider::OpenAi => self.openai.as_ref().ok_or_else(unconfigured)?.call(req),
            Provider::Gemini => self.gemini.as_ref().ok_or_else(unconfigured)?.call(req),
            Provider::Mock => self
                .mocks
                .get(&req.config.model_name)
                .ok_or_else(unconfigured)?
                .call(req),
        }
    }
}
