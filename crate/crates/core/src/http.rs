//! Blocking JSON-over-HTTP transport shared by the external backends.

use std::time::Duration;

use thiserror::Error;

/// Environment variable holding the bearer token for external backends.
pub const API_KEY_ENV: &str = "SCENESYNTH_API_KEY";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("backend transport failed after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("backend answered HTTP {status} after {attempts} attempts")]
    Status { attempts: u32, status: u16 },
}

#[derive(Debug, Clone)]
pub struct HttpClient {
    agent: ureq::Agent,
    endpoint: String,
    api_key: Option<String>,
    attempts: u32,
}

impl HttpClient {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>, timeout: Duration, attempts: u32) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { agent, endpoint: endpoint.into(), api_key, attempts: attempts.max(1) }
    }

    /// Client configured from the environment's API key.
    pub fn from_env(endpoint: impl Into<String>, timeout: Duration, attempts: u32) -> Self {
        Self::new(endpoint, std::env::var(API_KEY_ENV).ok(), timeout, attempts)
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    /// POSTs `body` and returns the response bytes of the first 2xx answer.
    /// Transport failures and 5xx answers are retried; 4xx answers are not.
    pub fn post_json(&self, body: &serde_json::Value) -> Result<Vec<u8>, BackendError> {
        let mut last = BackendError::Transport { attempts: 0, message: "no attempt made".into() };
        for attempt in 1..=self.attempts {
            let mut request = self.agent.post(&self.endpoint).header("Content-Type", "application/json");
            if let Some(key) = &self.api_key {
                request = request.header("Authorization", format!("Bearer {key}"));
            }
            match request.send(body.to_string()) {
                Ok(mut response) => {
                    let status = response.status().as_u16();
                    if (200..300).contains(&status) {
                        return response
                            .body_mut()
                            .read_to_vec()
                            .map_err(|e| BackendError::Transport { attempts: attempt, message: e.to_string() });
                    }
                    last = BackendError::Status { attempts: attempt, status };
                    if status < 500 {
                        return Err(last);
                    }
                }
                Err(e) => last = BackendError::Transport { attempts: attempt, message: e.to_string() },
            }
            if attempt < self.attempts {
                std::thread::sleep(Duration::from_millis(50 * u64::from(attempt)));
            }
        }
        Err(last)
    }
}
