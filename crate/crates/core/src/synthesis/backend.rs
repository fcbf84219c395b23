use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::{ModelRequest, RequestKind};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("request timed out")]
    Timeout,
    #[error("authentication failed: {0}")]
    AuthFailure(String),
    #[error("remote error {status}: {body}")]
    RemoteError { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("no fixture {kind}/{entry_id}.txt")]
    MissingFixture { kind: &'static str, entry_id: String },
}

/// A text-completion service. Implementations must tolerate concurrent
/// calls unless they report a concurrency limit of 1.
pub trait ModelBackend: Send + Sync {
    fn complete(&self, request: &ModelRequest) -> Result<String, BackendError>;

    fn max_retries(&self) -> u32 {
        0
    }

    fn concurrency_limit(&self) -> Option<usize> {
        None
    }

    fn is_mock(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FailedCompletion {
    pub error: BackendError,
    pub attempts: u32,
}

/// Calls the backend once plus up to `max_retries` more times.
pub fn complete_with_retry(
    backend: &dyn ModelBackend,
    request: &ModelRequest,
    max_retries: u32,
) -> Result<Completion, FailedCompletion> {
    let mut attempts = 0;
    loop {
        attempts += 1;
        match backend.complete(request) {
            Ok(text) => return Ok(Completion { text, attempts }),
            Err(error) if attempts > max_retries => return Err(FailedCompletion { error, attempts }),
            Err(error) => log::debug!("attempt {attempts} failed: {error}; retrying"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct BackendConfig {
    pub endpoint_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the bearer token.
    pub auth_token_env_var: String,
    pub timeout_seconds: f64,
    #[serde(default)]
    pub max_retries: u32,
    #[serde(default)]
    pub max_concurrency: Option<usize>,
}

impl BackendConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        let cfg: BackendConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<(), String> {
        if !(self.timeout_seconds > 0.0 && self.timeout_seconds.is_finite()) {
            return Err(format!("timeoutSeconds must be positive, got {}", self.timeout_seconds));
        }
        if self.max_concurrency == Some(0) {
            return Err("maxConcurrency must be at least 1".into());
        }
        Ok(())
    }
}

/// JSON-over-HTTP backend.
///
/// Body: `{model, prompt, audio_ref?, max_tokens, temperature}`. The reply is
/// read from a `text` or `output` string field, an OpenAI-style `choices`
/// array, or taken verbatim when it is not JSON.
pub struct HttpBackend {
    config: BackendConfig,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(config: BackendConfig) -> Result<Self, String> {
        config.check()?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_seconds)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { config, agent })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    fn body(&self, request: &ModelRequest) -> Value {
        let mut body = json!({
            "model": self.config.model_name,
            "prompt": request.prompt,
            "max_tokens": request.max_output_tokens,
            "temperature": request.temperature,
        });
        if let Some(audio) = &request.audio_ref {
            body["audio_ref"] = Value::String(audio.clone());
        }
        body
    }
}

impl ModelBackend for HttpBackend {
    fn complete(&self, request: &ModelRequest) -> Result<String, BackendError> {
        let token = std::env::var(&self.config.auth_token_env_var).map_err(|_| {
            BackendError::AuthFailure(format!("environment variable {} is not set", self.config.auth_token_env_var))
        })?;
        let mut response = self
            .agent
            .post(&self.config.endpoint_url)
            .header("Authorization", &format!("Bearer {token}"))
            .header("Content-Type", "application/json")
            .send(self.body(request).to_string())
            .map_err(|e| match e {
                ureq::Error::Timeout(_) => BackendError::Timeout,
                other => BackendError::Transport(other.to_string()),
            })?;
        let status = response.status().as_u16();
        let body = response.body_mut().read_to_string().map_err(|e| match e {
            ureq::Error::Timeout(_) => BackendError::Timeout,
            other => BackendError::Transport(other.to_string()),
        })?;
        match status {
            200..=299 => Ok(response_text(body)),
            401 | 403 => Err(BackendError::AuthFailure(format!("status {status}: {body}"))),
            _ => Err(BackendError::RemoteError { status, body }),
        }
    }

    fn max_retries(&self) -> u32 {
        self.config.max_retries
    }

    fn concurrency_limit(&self) -> Option<usize> {
        self.config.max_concurrency
    }
}

fn response_text(body: String) -> String {
    let Ok(value) = serde_json::from_str::<Value>(&body) else {
        return body;
    };
    let pick = |v: &Value| v.as_str().map(str::to_owned);
    pick(&value["text"])
        .or_else(|| pick(&value["output"]))
        .or_else(|| pick(&value["choices"][0]["message"]["content"]))
        .or_else(|| pick(&value["choices"][0]["text"]))
        .unwrap_or(body)
}

/// Offline backend answering from `<dir>/<kind>/<entryId>.txt`.
#[derive(Debug, Clone)]
pub struct MockBackend {
    dir: PathBuf,
}

impl MockBackend {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn fixture_path(&self, kind: RequestKind, entry_id: &str) -> PathBuf {
        self.dir.join(kind.fixture_dir()).join(format!("{entry_id}.txt"))
    }
}

impl ModelBackend for MockBackend {
    fn complete(&self, request: &ModelRequest) -> Result<String, BackendError> {
        let entry_id = request.entry_id.as_deref().unwrap_or_default();
        let missing = || BackendError::MissingFixture {
            kind: request.kind.fixture_dir(),
            entry_id: entry_id.to_string(),
        };
        if entry_id.is_empty() || entry_id.contains(['/', '\\']) || entry_id.starts_with('.') {
            return Err(missing());
        }
        std::fs::read_to_string(self.fixture_path(request.kind, entry_id)).map_err(|_| missing())
    }

    fn is_mock(&self) -> bool {
        true
    }
}
