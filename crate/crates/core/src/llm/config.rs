use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Provider {
    #[serde(rename = "openai-compatible")]
    OpenAi,
    #[serde(rename = "gemini-compatible")]
    Gemini,
    #[serde(rename = "mock")]
    Mock,
}

impl Provider {
    pub fn as_str(self) -> &'static str {
        match self {
            Provider::OpenAi => "openai-compatible",
            Provider::Gemini => "gemini-compatible",
            Provider::Mock => "mock",
        }
    }
}

impl fmt::Display for Provider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn default_max_output_tokens() -> u32 {
    1024
}

fn default_rpm() -> u32 {
    60
}

fn default_max_retries() -> u32 {
    5
}

/// One model endpoint and its request policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub provider: Provider,
    pub model_name: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
    #[serde(default = "default_rpm")]
    pub requests_per_minute: u32,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// Overrides the provider's public endpoint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    /// Fixture file for the mock provider.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixtures: Option<PathBuf>,
}

impl ModelConfig {
    pub fn new(provider: Provider, model_name: impl Into<String>) -> Self {
        ModelConfig {
            provider,
            model_name: model_name.into(),
            temperature: 0.0,
            max_output_tokens: default_max_output_tokens(),
            requests_per_minute: default_rpm(),
            max_retries: default_max_retries(),
            base_url: None,
            fixtures: None,
        }
    }

    pub fn mock(model_name: impl Into<String>) -> Self {
        ModelConfig::new(Provider::Mock, model_name)
    }

    pub fn with_temperature(&self, temperature: f64) -> Self {
        ModelConfig {
            temperature,
            ..self.clone()
        }
    }

    /// Temperature zero asks the provider for greedy decoding.
    pub fn deterministic(&self) -> bool {
        self.temperature == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(format!("model `{}`: {m}", self.model_name)));
        if self.model_name.trim().is_empty() {
            return Err(Error::Config("model_name is empty".into()));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return fail("temperature must be a finite number >= 0");
        }
        if self.max_output_tokens == 0 {
            return fail("max_output_tokens must be positive");
        }
        if self.requests_per_minute == 0 {
            return fail("requests_per_minute must be positive");
        }
        if self.provider == Provider::Mock && self.fixtures.is_none() {
            return fail("mock provider needs a fixtures file");
        }
        Ok(())
    }
}
