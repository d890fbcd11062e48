//! Blocking client for OpenAI-compatible `/chat/completions` endpoints.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde_json::{json, Value};

use super::{validate, BackendError, ChatBackend, ChatRequest, Completion, Usage};
use crate::tokens::CountingMode;

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 2u32.saturating_pow(attempt);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

#[derive(Debug, Clone)]
pub struct HttpConfig {
    /// Full URL of the chat completions endpoint.
    pub endpoint_url: String,
    /// Used when the request leaves `model_name` empty.
    pub model_name: String,
    /// Environment variable holding the bearer token. `None` sends no
    /// Authorization header (local servers).
    pub api_key_env: Option<String>,
    pub timeout: Duration,
    pub retry: RetryPolicy,
    /// Maximum requests in flight across all threads.
    pub permits: usize,
    /// Used for usage accounting when the server omits `usage`.
    pub counting: CountingMode,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            endpoint_url: "https://api.openai.com/v1/chat/completions".into(),
            model_name: "o4-mini".into(),
            api_key_env: Some("OPENAI_API_KEY".into()),
            timeout: Duration::from_secs(300),
            retry: RetryPolicy::default(),
            permits: 8,
            counting: CountingMode::default(),
        }
    }
}

struct Semaphore {
    available: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(permits: usize) -> Self {
        Self {
            available: Mutex::new(permits.max(1)),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.available.lock().unwrap_or_else(|e| e.into_inner());
        while *n == 0 {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.available.lock().unwrap_or_else(|e| e.into_inner());
        *n += 1;
        self.0.freed.notify_one();
    }
}

pub struct HttpBackend {
    config: HttpConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    permits: Semaphore,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, BackendError> {
        let api_key = match &config.api_key_env {
            Some(var) => Some(
                std::env::var(var).map_err(|_| BackendError::MissingCredential(var.clone()))?,
            ),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let permits = Semaphore::new(config.permits);
        Ok(Self {
            config,
            api_key,
            client,
            permits,
        })
    }

    fn body(&self, request: &ChatRequest) -> Value {
        let model = if request.model_name.is_empty() {
            &self.config.model_name
        } else {
            &request.model_name
        };
        json!({
            "model": model,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        })
    }

    fn send_once(&self, body: &Value) -> Result<Value, BackendError> {
        let _permit = self.permits.acquire();
        let mut req = self.client.post(&self.config.endpoint_url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(BackendError::Http {
                status: status.as_u16(),
                body: text,
            });
        }
        serde_json::from_str(&text).map_err(|e| BackendError::InvalidResponse(e.to_string()))
    }

    fn parse(&self, request: &ChatRequest, value: &Value) -> Result<Completion, BackendError> {
        let text = value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| BackendError::InvalidResponse("missing choices[0].message.content".into()))?
            .to_string();
        let counted = |ptr: &str| {
            value
                .pointer(ptr)
                .and_then(Value::as_u64)
                .map(|v| v as usize)
        };
        let usage = Usage {
            tokens_in: counted("/usage/prompt_tokens").unwrap_or_else(|| {
                request
                    .messages
                    .iter()
                    .map(|m| self.config.counting.count(&m.content))
                    .sum()
            }),
            tokens_out: counted("/usage/completion_tokens")
                .unwrap_or_else(|| self.config.counting.count(&text)),
        };
        Ok(Completion { text, usage })
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&self, request: &ChatRequest) -> Result<Completion, BackendError> {
        validate(request)?;
        let body = self.body(request);
        let mut attempt = 0;
        loop {
            match self.send_once(&body) {
                Ok(value) => return self.parse(request, &value),
                Err(e) if e.is_transient() && attempt < self.config.retry.max_retries => {
                    log::warn!("transient backend error (attempt {}): {e}", attempt + 1);
                    std::thread::sleep(self.config.retry.delay(attempt));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles_and_caps() {
        let r = RetryPolicy {
            max_retries: 3,
            base_delay: Duration::from_millis(100),
            max_delay: Duration::from_millis(350),
        };
        assert_eq!(r.delay(0), Duration::from_millis(100));
        assert_eq!(r.delay(1), Duration::from_millis(200));
        assert_eq!(r.delay(2), Duration::from_millis(350));
    }

    #[test]
    fn missing_credential() {
        let cfg = HttpConfig {
            api_key_env: Some("GRAPHBENCH_TEST_SURELY_UNSET_KEY".into()),
            ..HttpConfig::default()
        };
        assert!(matches!(
            HttpBackend::new(cfg),
            Err(BackendError::MissingCredential(_))
        ));
    }

    #[test]
    fn transient_classification() {
        assert!(BackendError::Http { status: 503, body: String::new() }.is_transient());
        assert!(BackendError::Http { status: 429, body: String::new() }.is_transient());
        assert!(!BackendError::Http { status: 401, body: String::new() }.is_transient());
        assert!(BackendError::Transport("reset".into()).is_transient());
    }
}
