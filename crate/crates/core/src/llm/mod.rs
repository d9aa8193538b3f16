//! Provider-agnostic structured LLM calls with schema validation, bounded
//! re-prompting and token accounting.

mod openai;
mod scripted;

use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use openai::OpenAiProvider;
pub use scripted::{CallCounter, ReplayEntry, ScriptedProvider, SharedProvider};

pub const DEFAULT_MAX_REPROMPTS: u32 = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GatewayError {
    #[error("LLM provider unreachable: {0}")]
    ProviderUnreachable(String),
    #[error("LLM request timed out after {0} s")]
    Timeout(u64),
    #[error("LLM provider answered HTTP {status}: {body}")]
    ProviderStatus { status: u16, body: String },
    #[error("LLM output still invalid after {attempts} attempts: {last_error}")]
    MalformedAfterRetries { attempts: u32, last_error: String },
    #[error("environment variable {0} holding the API key is not set")]
    MissingApiKey(String),
    #[error("replay script has no remaining '{0}' entry")]
    ScriptExhausted(Purpose),
    #[error("invalid structured request: {0}")]
    InvalidRequest(String),
    #[error("cannot read replay file: {0}")]
    Replay(String),
}

/// Error from [`LlmGateway::complete_validated`]: either the gateway failed,
/// or every reply parsed but the caller's check kept rejecting it.
#[derive(Debug, Clone, PartialEq)]
pub enum ValidatedError<E> {
    Gateway(GatewayError),
    Rejected { attempts: u32, reason: E },
}

impl<E: fmt::Display> fmt::Display for ValidatedError<E> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidatedError::Gateway(e) => e.fmt(f),
            ValidatedError::Rejected { attempts, reason } => {
                write!(f, "LLM output rejected after {attempts} attempts: {reason}")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::new(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::new(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::new(Role::Assistant, content)
    }
}

/// What a structured call produces; replay entries are matched on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Plan,
    Values,
    Scenarios,
    InvalidValues,
}

impl fmt::Display for Purpose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Purpose::Plan => "plan",
            Purpose::Values => "values",
            Purpose::Scenarios => "scenarios",
            Purpose::InvalidValues => "invalid_values",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl TokenUsage {
    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

impl std::ops::AddAssign for TokenUsage {
    fn add_assign(&mut self, rhs: Self) {
        self.prompt_tokens += rhs.prompt_tokens;
        self.completion_tokens += rhs.completion_tokens;
    }
}

/// Connection settings for an OpenAI-compatible chat-completions endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the key, never the key.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_reprompts: u32,
    pub temperature: f64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1".into(),
            model: "gpt-4.1-mini".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_secs: 120,
            max_reprompts: DEFAULT_MAX_REPROMPTS,
            temperature: 0.0,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.timeout_secs == 0 {
            return Err(GatewayError::InvalidRequest("provider timeout must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructuredRequest {
    pub messages: Vec<ChatMessage>,
    /// JSON Schema of the expected reply; must describe one object.
    pub output_schema: Value,
    pub purpose: Purpose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderReply {
    pub text: String,
    pub usage: TokenUsage,
}

/// A chat backend. Only the gateway talks to providers.
pub trait ChatProvider {
    fn chat(
        &mut self,
        purpose: Purpose,
        messages: &[ChatMessage],
        output_schema: &Value,
    ) -> Result<ProviderReply, GatewayError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub purpose: Purpose,
    pub usage: TokenUsage,
}

/// Every provider invocation, successful or not, in call order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenLedger {
    pub entries: Vec<LedgerEntry>,
}

impl TokenLedger {
    pub fn record(&mut self, purpose: Purpose, usage: TokenUsage) {
        self.entries.push(LedgerEntry { purpose, usage });
    }

    pub fn totals(&self) -> TokenUsage {
        let mut sum = TokenUsage::default();
        for e in &self.entries {
            sum += e.usage;
        }
        sum
    }

    pub fn total_tokens(&self) -> u64 {
        self.totals().total()
    }

    pub fn invocations(&self) -> usize {
        self.entries.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("no test cases to divide tokens over")]
pub struct NoTestCases;

/// Total prompt plus completion tokens divided by the number of test cases.
pub fn tokens_per_test_case(ledger: &TokenLedger, test_case_count: u64) -> Result<Ratio<u64>, NoTestCases> {
    if test_case_count == 0 {
        return Err(NoTestCases);
    }
    Ok(Ratio::new(ledger.total_tokens(), test_case_count))
}

/// A parsed reply plus what it cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion<T> {
    pub value: T,
    /// Summed over every attempt of this call.
    pub usage: TokenUsage,
    pub attempts: u32,
}

pub struct LlmGateway {
    provider: Box<dyn ChatProvider>,
    max_reprompts: u32,
    ledger: TokenLedger,
}

impl LlmGateway {
    pub fn new(provider: Box<dyn ChatProvider>, max_reprompts: u32) -> Self {
        Self {
            provider,
            max_reprompts,
            ledger: TokenLedger::default(),
        }
    }

    pub fn ledger(&self) -> &TokenLedger {
        &self.ledger
    }

    pub fn max_reprompts(&self) -> u32 {
        self.max_reprompts
    }

    /// Asks for a reply matching `req.output_schema`, re-prompting with the
    /// validation error up to `max_reprompts` times.
    pub fn complete_structured(&mut self, req: &StructuredRequest) -> Result<Completion<Value>, GatewayError> {
        self.complete_validated(req, |v| Ok::<_, String>(v.clone()))
            .map_err(|e| match e {
                ValidatedError::Gateway(g) => g,
                ValidatedError::Rejected { attempts, reason } => GatewayError::MalformedAfterRetries {
                    attempts,
                    last_error: reason,
                },
            })
    }

    /// Like [`complete_structured`](Self::complete_structured) with an extra
    /// semantic check. A rejection is fed back to the model the same way a
    /// schema violation is.
    pub fn complete_validated<T, E, F>(
        &mut self,
        req: &StructuredRequest,
        mut check: F,
    ) -> Result<Completion<T>, ValidatedError<E>>
    where
        E: fmt::Display,
        F: FnMut(&Value) -> Result<T, E>,
    {
        let validator = compile_output_schema(&req.output_schema).map_err(ValidatedError::Gateway)?;
        if let Some(m) = req.messages.iter().find(|m| m.content.trim().is_empty()) {
            return Err(ValidatedError::Gateway(GatewayError::InvalidRequest(format!(
                "{:?} message has empty content",
                m.role
            ))));
        }
        let mut messages = req.messages.clone();
        messages.push(ChatMessage::system(schema_instruction(&req.output_schema)));

        let mut usage = TokenUsage::default();
        let mut last_schema_error: Option<String> = None;
        let mut last_rejection: Option<E> = None;
        let attempts_allowed = self.max_reprompts + 1;
        for attempt in 1..=attempts_allowed {
            let reply = match self.provider.chat(req.purpose, &messages, &req.output_schema) {
                Ok(r) => r,
                Err(e) => {
                    self.ledger.record(req.purpose, TokenUsage::default());
                    return Err(ValidatedError::Gateway(e));
                }
            };
            self.ledger.record(req.purpose, reply.usage);
            usage += reply.usage;

            let problem = match parse_reply(&reply.text) {
                Err(e) => e,
                Ok(value) => match first_schema_error(&validator, &value) {
                    Some(e) => e,
                    None => match check(&value) {
                        Ok(out) => {
                            return Ok(Completion {
                                value: out,
                                usage,
                                attempts: attempt,
                            })
                        }
                        Err(reason) => {
                            let text = reason.to_string();
                            last_rejection = Some(reason);
                            last_schema_error = None;
                            tracing::debug!(purpose = %req.purpose, attempt, "reply rejected: {text}");
                            messages.push(ChatMessage::assistant(non_empty(&reply.text)));
                            messages.push(ChatMessage::user(reprompt_text(&text)));
                            continue;
                        }
                    },
                },
            };
            tracing::debug!(purpose = %req.purpose, attempt, "malformed reply: {problem}");
            last_rejection = None;
            messages.push(ChatMessage::assistant(non_empty(&reply.text)));
            messages.push(ChatMessage::user(reprompt_text(&problem)));
            last_schema_error = Some(problem);
        }
        match (last_rejection, last_schema_error) {
            (Some(reason), _) => Err(ValidatedError::Rejected {
                attempts: attempts_allowed,
                reason,
            }),
            (None, last) => Err(ValidatedError::Gateway(GatewayError::MalformedAfterRetries {
                attempts: attempts_allowed,
                last_error: last.unwrap_or_default(),
            })),
        }
    }
}

fn non_empty(text: &str) -> String {
    if text.trim().is_empty() {
        "(empty reply)".into()
    } else {
        text.to_string()
    }
}

fn schema_instruction(schema: &Value) -> String {
    format!(
        "Respond with exactly one JSON object and nothing else. It must validate against this JSON Schema:\n{}",
        serde_json::to_string_pretty(schema).unwrap_or_default()
    )
}

fn reprompt_text(problem: &str) -> String {
    format!(
        "Your previous reply could not be used: {problem}\nReply again with only the corrected JSON object."
    )
}

fn compile_output_schema(schema: &Value) -> Result<jsonschema::Validator, GatewayError> {
    if schema.get("type").and_then(Value::as_str) != Some("object") {
        return Err(GatewayError::InvalidRequest(
            "output schema must describe a single top-level object".into(),
        ));
    }
    jsonschema::validator_for(schema)
        .map_err(|e| GatewayError::InvalidRequest(format!("output schema does not compile: {e}")))
}

fn first_schema_error(validator: &jsonschema::Validator, value: &Value) -> Option<String> {
    validator.iter_errors(value).next().map(|e| {
        let path = e.instance_path.to_string();
        if path.is_empty() {
            format!("schema violation: {e}")
        } else {
            format!("schema violation at {path}: {e}")
        }
    })
}

/// Extracts a JSON object from model text, tolerating code fences and
/// surrounding prose.
pub(crate) fn parse_reply(text: &str) -> Result<Value, String> {
    let trimmed = text.trim();
    let unfenced = trimmed
        .strip_prefix("```json")
        .or_else(|| trimmed.strip_prefix("```"))
        .and_then(|s| s.trim_end().strip_suffix("```"))
        .unwrap_or(trimmed)
        .trim();
    if let Ok(v) = serde_json::from_str::<Value>(unfenced) {
        return Ok(v);
    }
    if let (Some(start), Some(end)) = (unfenced.find('{'), unfenced.rfind('}')) {
        if start < end {
            if let Ok(v) = serde_json::from_str::<Value>(&unfenced[start..=end]) {
                return Ok(v);
            }
        }
    }
    Err("reply is not valid JSON".into())
}
