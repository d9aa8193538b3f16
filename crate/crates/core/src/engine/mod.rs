//! Turns resolved values into HTTP requests, sends them, and runs
//! environment initialization scripts.

mod render;
mod script;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use render::{
    build_template, encode_component, is_token, placeholder, render_request, scalar_text, step_request, Cell,
    HttpRequestPlan, RequestTemplate,
};
pub use script::{run_init_script, EnvInitScript, ScriptError, ScriptOutput};

use crate::oas::HttpMethod;

pub const DEFAULT_REQUEST_TIMEOUT_SECS: u64 = 30;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("no value for required {0}")]
    MissingRequiredValue(String),
    #[error("{0}")]
    UnflattenConflict(String),
    #[error("request body media type '{0}' is not supported, only JSON bodies are")]
    UnsupportedMediaType(String),
    #[error("'{0}' is not a valid HTTP header name")]
    InvalidHeaderName(String),
    #[error("value of {0} contains forbidden characters")]
    InvalidHeaderValue(String),
    #[error("key '{0}' does not belong to this step's request")]
    ForeignKey(String),
    #[error("variable '{0}' has no value yet")]
    UnresolvedVariable(String),
    #[error("cannot serialize request body: {0}")]
    Serialize(String),
    #[error("transport error: {0}")]
    Transport(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpExchange {
    pub request: HttpRequestPlan,
    pub status: u16,
    /// Lower-cased names. Not serialized, to keep stored exchanges stable.
    #[serde(skip)]
    pub response_headers: Vec<(String, String)>,
    pub response_body: String,
    #[serde(skip)]
    pub elapsed_ms: u64,
}

impl HttpExchange {
    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }

    pub fn response_header(&self, name: &str) -> Option<&str> {
        self.response_headers
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub timeout_secs: u64,
    pub verify_tls: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            timeout_secs: DEFAULT_REQUEST_TIMEOUT_SECS,
            verify_tls: true,
        }
    }
}

/// Blocking HTTP client that never follows redirects and never interprets
/// status codes.
#[derive(Debug, Clone)]
pub struct RequestEngine {
    client: reqwest::blocking::Client,
}

impl RequestEngine {
    pub fn new(cfg: EngineConfig) -> Result<Self, EngineError> {
        let timeout = Duration::from_secs(cfg.timeout_secs.max(1));
        let client = reqwest::blocking::Client::builder()
            .redirect(reqwest::redirect::Policy::none())
            .timeout(timeout)
            .tls_danger_accept_invalid_certs(!cfg.verify_tls)
            .build()
            .map_err(|e| EngineError::Transport(e.to_string()))?;
        Ok(Self { client })
    }

    pub fn send(&self, plan: &HttpRequestPlan) -> Result<HttpExchange, EngineError> {
        let method = match plan.method {
            HttpMethod::Get => reqwest::Method::GET,
            HttpMethod::Post => reqwest::Method::POST,
            HttpMethod::Put => reqwest::Method::PUT,
            HttpMethod::Patch => reqwest::Method::PATCH,
            HttpMethod::Delete => reqwest::Method::DELETE,
            HttpMethod::Head => reqwest::Method::HEAD,
            HttpMethod::Options => reqwest::Method::OPTIONS,
        };
        let mut req = self.client.request(method, &plan.url);
        for (name, value) in &plan.headers {
            req = req.header(name.as_str(), value.as_str());
        }
        if !plan.cookies.is_empty() {
            let cookie: Vec<String> = plan.cookies.iter().map(|(n, v)| format!("{n}={v}")).collect();
            req = req.header("Cookie", cookie.join("; "));
        }
        if let Some(body) = &plan.body {
            req = req.body(body.clone());
        }
        let started = Instant::now();
        let resp = req.send().map_err(|e| EngineError::Transport(describe_reqwest(&e)))?;
        let status = resp.status().as_u16();
        let response_headers = resp
            .headers()
            .iter()
            .map(|(n, v)| (n.as_str().to_string(), String::from_utf8_lossy(v.as_bytes()).into_owned()))
            .collect();
        let bytes = resp.bytes().map_err(|e| EngineError::Transport(describe_reqwest(&e)))?;
        let elapsed_ms = started.elapsed().as_millis() as u64;
        tracing::debug!(method = %plan.method, url = %plan.url, status, elapsed_ms, "exchange");
        Ok(HttpExchange {
            request: plan.clone(),
            status,
            response_headers,
            response_body: String::from_utf8_lossy(&bytes).into_owned(),
            elapsed_ms,
        })
    }
}

fn describe_reqwest(e: &reqwest::Error) -> String {
    use std::error::Error as _;
    let mut text = e.to_string();
    let mut source = e.source();
    while let Some(s) = source {
        text.push_str(": ");
        text.push_str(&s.to_string());
        source = s.source();
    }
    if e.is_timeout() {
        text.push_str(" (timed out)");
    }
    text
}
