use std::time::Duration;

use serde_json::{json, Value};

use super::{ChatMessage, ChatProvider, GatewayError, ProviderConfig, ProviderReply, Purpose, TokenUsage};

/// Client for OpenAI-compatible `chat/completions` endpoints.
pub struct OpenAiProvider {
    client: reqwest::blocking::Client,
    url: String,
    model: String,
    temperature: f64,
    timeout_secs: u64,
    api_key: String,
}

impl OpenAiProvider {
    /// Reads the API key from the configured environment variable.
    pub fn from_config(cfg: &ProviderConfig) -> Result<Self, GatewayError> {
        let api_key = std::env::var(&cfg.api_key_env)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| GatewayError::MissingApiKey(cfg.api_key_env.clone()))?;
        Self::with_key(cfg, api_key)
    }

    pub fn with_key(cfg: &ProviderConfig, api_key: String) -> Result<Self, GatewayError> {
        cfg.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| GatewayError::ProviderUnreachable(e.to_string()))?;
        let base = cfg.endpoint.trim_end_matches('/');
        let url = if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        };
        Ok(Self {
            client,
            url,
            model: cfg.model.clone(),
            temperature: cfg.temperature,
            timeout_secs: cfg.timeout_secs,
            api_key,
        })
    }
}

impl ChatProvider for OpenAiProvider {
    fn chat(
        &mut self,
        _purpose: Purpose,
        messages: &[ChatMessage],
        _output_schema: &Value,
    ) -> Result<ProviderReply, GatewayError> {
        let body = json!({
            "model": self.model,
            "messages": messages,
            "temperature": self.temperature,
            "response_format": {"type": "json_object"},
        });
        let resp = self
            .client
            .post(&self.url)
            .bearer_auth(&self.api_key)
            .header("api-key", &self.api_key)
            .json(&body)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    GatewayError::Timeout(self.timeout_secs)
                } else {
                    GatewayError::ProviderUnreachable(e.to_string())
                }
            })?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| GatewayError::ProviderUnreachable(e.to_string()))?;
        if !status.is_success() {
            return Err(GatewayError::ProviderStatus {
                status: status.as_u16(),
                body: text,
            });
        }
        parse_completion(&text)
    }
}

fn parse_completion(text: &str) -> Result<ProviderReply, GatewayError> {
    let v: Value = serde_json::from_str(text).map_err(|e| GatewayError::ProviderStatus {
        status: 200,
        body: format!("unparseable completion ({e}): {text}"),
    })?;
    let content = v
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    let usage = TokenUsage {
        prompt_tokens: v.pointer("/usage/prompt_tokens").and_then(Value::as_u64).unwrap_or(0),
        completion_tokens: v
            .pointer("/usage/completion_tokens")
            .and_then(Value::as_u64)
            .unwrap_or(0),
    };
    Ok(ProviderReply {
        text: content,
        usage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_completion_payload() {
        let reply = parse_completion(
            r#"{"choices": [{"message": {"role": "assistant", "content": "{\"a\":1}"}}], "usage": {"prompt_tokens": 12, "completion_tokens": 5, "total_tokens": 17}}"#,
        )
        .unwrap();
        assert_eq!(reply.text, r#"{"a":1}"#);
        assert_eq!(reply.usage.total(), 17);
    }

    #[test]
    fn missing_key_is_reported_by_variable_name() {
        let cfg = ProviderConfig {
            api_key_env: "HAPPYPATH_TEST_SURELY_UNSET_KEY".into(),
            ..ProviderConfig::default()
        };
        assert!(matches!(
            OpenAiProvider::from_config(&cfg),
            Err(GatewayError::MissingApiKey(name)) if name == "HAPPYPATH_TEST_SURELY_UNSET_KEY"
        ));
    }

    #[test]
    fn unreachable_endpoint() {
        let cfg = ProviderConfig {
            endpoint: "http://127.0.0.1:9".into(),
            timeout_secs: 2,
            ..ProviderConfig::default()
        };
        let mut p = OpenAiProvider::with_key(&cfg, "k".into()).unwrap();
        let err = p.chat(Purpose::Plan, &[ChatMessage::user("hi")], &Value::Null).unwrap_err();
        assert!(matches!(err, GatewayError::ProviderUnreachable(_) | GatewayError::Timeout(_)), "{err}");
    }
}
