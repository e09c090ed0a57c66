//! Chat-completions client with retries and rate limiting.

use std::path::Path;
use std::time::Duration;

use cok_core::llm::{BackendError, GenerationRequest, GenerationResponse, LlmBackend, Usage};
use rand::Rng;
use serde::Deserialize;
use serde_json::{json, Value};

use super::RateLimiter;
use crate::error::{Error, Result};
use crate::kb_io::{manifest_error, read_to_string};

pub const API_KEY_ENV: &str = "COK_API_KEY";
pub const DEFAULT_TIMEOUT_S: u64 = 60;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpConfig {
    pub endpoint_url: String,
    pub model: String,
    pub requests_per_minute: Option<u32>,
    #[serde(default = "default_timeout")]
    pub timeout_s: u64,
}

fn default_timeout() -> u64 {
    DEFAULT_TIMEOUT_S
}

impl HttpConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let cfg: HttpConfig = toml::from_str(&read_to_string(path)?).map_err(|e| manifest_error(path, &e))?;
        if cfg.requests_per_minute == Some(0) || cfg.timeout_s == 0 {
            return Err(Error::data(path, 0, "requests_per_minute and timeout_s must be positive"));
        }
        Ok(cfg)
    }
}

/// Retries on 429, 5xx and transport failures, sleeping
/// `base · 2^attempt`, scaled by a random factor in [0.5, 1.5).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    fn delay(&self, retry: u32) -> Duration {
        let jitter = rand::rng().random_range(0.5..1.5);
        self.base_delay.mul_f64(f64::from(1u32 << retry.min(16)) * jitter)
    }
}

pub struct HttpBackend {
    config: HttpConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
    limiter: Option<RateLimiter>,
    retry: RetryPolicy,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct Choice {
    #[serde(default)]
    index: usize,
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

enum Attempt {
    Done(GenerationResponse),
    Retry(String),
    Fatal(BackendError),
}

impl HttpBackend {
    /// Reads the API key from `COK_API_KEY` if set.
    pub fn new(config: HttpConfig) -> Self {
        let key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::with_key(config, key)
    }

    pub fn with_key(config: HttpConfig, api_key: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_s)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            limiter: config.requests_per_minute.map(RateLimiter::per_minute),
            config,
            api_key,
            agent,
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// The JSON body sent for `request`: a single user message plus the
    /// decoding parameters. The configured model applies when the request
    /// names none.
    pub fn request_body(&self, request: &GenerationRequest) -> Value {
        let model = if request.model.is_empty() {
            &self.config.model
        } else {
            &request.model
        };
        json!({
            "model": model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.params.temperature,
            "max_tokens": request.params.max_tokens,
            "n": request.params.n_samples,
        })
    }

    fn attempt(&self, body: &Value, want: usize) -> Attempt {
        if let Some(l) = &self.limiter {
            l.acquire();
        }
        let mut req = self.agent.post(&self.config.endpoint_url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = resp.status().as_u16();
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(format!("HTTP {status}: reading body: {e}")),
        };
        match status {
            200..=299 => match parse_response(&text, want) {
                Ok(r) => Attempt::Done(r),
                Err(e) => Attempt::Fatal(e),
            },
            429 | 500..=599 => Attempt::Retry(format!("HTTP {status}: {}", snippet(&text))),
            _ => Attempt::Fatal(BackendError::Transport {
                attempts: vec![format!("HTTP {status}: {}", snippet(&text))],
            }),
        }
    }
}

fn snippet(s: &str) -> &str {
    let end = s.char_indices().nth(200).map_or(s.len(), |(i, _)| i);
    &s[..end]
}

fn parse_response(text: &str, want: usize) -> Result<GenerationResponse, BackendError> {
    let mut r: ChatResponse = serde_json::from_str(text).map_err(|e| BackendError::Protocol(e.to_string()))?;
    r.choices.sort_by_key(|c| c.index);
    if r.choices.len() != want {
        return Err(BackendError::Protocol(format!("expected {want} choices, got {}", r.choices.len())));
    }
    Ok(GenerationResponse {
        texts: r
            .choices
            .into_iter()
            .map(|c| c.message.content.unwrap_or_default())
            .collect(),
        usage: r.usage.map(|u| Usage {
            prompt_tokens: u.prompt_tokens,
            completion_tokens: u.completion_tokens,
        }),
    })
}

impl LlmBackend for HttpBackend {
    fn complete(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        request.params.validate()?;
        let body = self.request_body(request);
        let want = request.params.n_samples as usize;
        let mut log = Vec::new();
        for retry in 0..=self.retry.max_retries {
            if retry > 0 {
                std::thread::sleep(self.retry.delay(retry - 1));
            }
            match self.attempt(&body, want) {
                Attempt::Done(r) => return Ok(r),
                Attempt::Fatal(BackendError::Transport { attempts }) => {
                    log.extend(attempts);
                    return Err(BackendError::Transport { attempts: log });
                }
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(msg) => {
                    log::warn!("attempt {} failed: {msg}", retry + 1);
                    log.push(msg);
                }
            }
        }
        Err(BackendError::Transport { attempts: log })
    }
}
