use std::thread;
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};

use dermrl_core::corpus::{GenerationError, TextGenerator};

use crate::config::GeneratorConfig;

/// OpenAI-style chat-completions client.
pub struct RemoteGenerator {
    client: Client,
    endpoint: String,
    model: String,
    api_key: Option<String>,
    retries: u32,
    backoff: Duration,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Deserialize)]
struct ReplyMessage {
    content: String,
}

enum Attempt {
    Retry(GenerationError),
    Fatal(GenerationError),
}

impl RemoteGenerator {
    /// Reads the credential from the configured environment variable; a
    /// missing variable means unauthenticated requests.
    pub fn from_config(cfg: &GeneratorConfig) -> anyhow::Result<Self> {
        let endpoint = cfg
            .endpoint
            .clone()
            .ok_or_else(|| anyhow::anyhow!("generator.endpoint is not set"))?;
        let api_key = std::env::var(&cfg.api_key_env).ok().filter(|k| !k.is_empty());
        if api_key.is_none() {
            tracing::warn!(var = %cfg.api_key_env, "no generator credential in environment");
        }
        let client = Client::builder()
            .timeout(Duration::from_secs_f64(cfg.timeout_secs))
            .build()?;
        Ok(Self {
            client,
            endpoint,
            model: cfg.model.clone(),
            api_key,
            retries: cfg.retries,
            backoff: Duration::from_millis(cfg.backoff_ms),
        })
    }

    fn attempt(&self, prompt: &str, n: u32) -> Result<String, Attempt> {
        let body = ChatRequest {
            model: &self.model,
            messages: [ChatMessage { role: "user", content: prompt }],
            temperature: 0.0,
        };
        let mut req = self.client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = match req.send() {
            Ok(r) => r,
            Err(e) if e.is_timeout() => return Err(Attempt::Retry(GenerationError::Timeout { attempts: n })),
            Err(e) => {
                return Err(Attempt::Retry(GenerationError::Transport { message: e.to_string(), attempts: n }))
            }
        };
        let status = resp.status();
        if !status.is_success() {
            let err = GenerationError::Status { status: status.as_u16(), attempts: n };
            let transient = status.is_server_error() || status == StatusCode::TOO_MANY_REQUESTS;
            return Err(if transient { Attempt::Retry(err) } else { Attempt::Fatal(err) });
        }
        let text = match resp.text() {
            Ok(t) => t,
            Err(e) if e.is_timeout() => return Err(Attempt::Retry(GenerationError::Timeout { attempts: n })),
            Err(e) => {
                return Err(Attempt::Retry(GenerationError::Transport { message: e.to_string(), attempts: n }))
            }
        };
        let parsed: ChatResponse = serde_json::from_str(&text)
            .map_err(|e| Attempt::Fatal(GenerationError::MalformedBody { message: e.to_string(), attempts: n }))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| {
                Attempt::Fatal(GenerationError::MalformedBody { message: "no choices".into(), attempts: n })
            })
    }
}

impl TextGenerator for RemoteGenerator {
    /// Timeouts, transport failures, 429 and 5xx are retried up to the
    /// budget with linear backoff; other statuses and bad bodies fail at once.
    fn generate(&self, prompt: &str) -> Result<String, GenerationError> {
        let mut n = 0;
        loop {
            n += 1;
            match self.attempt(prompt, n) {
                Ok(text) => return Ok(text),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(e)) if n > self.retries => return Err(e),
                Err(Attempt::Retry(e)) => {
                    tracing::warn!(attempt = n, error = %e, "generator call failed; retrying");
                    thread::sleep(self.backoff * n);
                }
            }
        }
    }
}
