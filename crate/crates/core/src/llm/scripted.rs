use std::collections::{HashMap, VecDeque};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{ChatMessage, ChatProvider, GatewayError, ProviderReply, Purpose, TokenUsage};

/// One scripted reply. `response` is sent verbatim when it is a JSON string
/// and serialized otherwise, so replay files can hold readable objects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub purpose: Purpose,
    pub response: Value,
    #[serde(default)]
    pub usage: TokenUsage,
    /// Operation the reply was recorded for. Informational; lets a replay
    /// file be cut down to a subset of operations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operation: Option<String>,
}

impl ReplayEntry {
    pub fn text(purpose: Purpose, text: &str, usage: TokenUsage) -> Self {
        Self {
            purpose,
            response: Value::String(text.to_string()),
            usage,
            operation: None,
        }
    }

    pub fn json(purpose: Purpose, response: Value, usage: TokenUsage) -> Self {
        Self {
            purpose,
            response,
            usage,
            operation: None,
        }
    }

    fn reply_text(&self) -> String {
        match &self.response {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct CallCounter(Arc<AtomicUsize>);

impl CallCounter {
    pub fn get(&self) -> usize {
        self.0.load(Ordering::SeqCst)
    }
}

/// Replays recorded replies. Each call takes the next unused entry whose
/// purpose matches, so the relative order of purposes does not matter.
#[derive(Debug, Default)]
pub struct ScriptedProvider {
    queues: HashMap<Purpose, VecDeque<ReplayEntry>>,
    calls: CallCounter,
    transcript: Vec<(Purpose, Vec<ChatMessage>)>,
}

impl ScriptedProvider {
    pub fn from_entries(entries: Vec<ReplayEntry>) -> Self {
        let mut queues: HashMap<Purpose, VecDeque<ReplayEntry>> = HashMap::new();
        for e in entries {
            queues.entry(e.purpose).or_default().push_back(e);
        }
        Self {
            queues,
            ..Self::default()
        }
    }

    /// Reads a JSON (or YAML) array of `{purpose, response, usage}`.
    pub fn from_file(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Replay(format!("{}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    pub fn from_text(text: &str) -> Result<Self, GatewayError> {
        let entries: Vec<ReplayEntry> = if text.trim_start().starts_with('[') {
            serde_json::from_str(text).map_err(|e| GatewayError::Replay(e.to_string()))?
        } else {
            serde_yaml::from_str(text).map_err(|e| GatewayError::Replay(e.to_string()))?
        };
        Ok(Self::from_entries(entries))
    }

    pub fn call_counter(&self) -> CallCounter {
        self.calls.clone()
    }

    pub fn remaining(&self, purpose: Purpose) -> usize {
        self.queues.get(&purpose).map_or(0, VecDeque::len)
    }

    /// Messages of every call so far, for prompt assertions in tests.
    pub fn transcript(&self) -> &[(Purpose, Vec<ChatMessage>)] {
        &self.transcript
    }
}

impl ChatProvider for ScriptedProvider {
    fn chat(
        &mut self,
        purpose: Purpose,
        messages: &[ChatMessage],
        _output_schema: &Value,
    ) -> Result<ProviderReply, GatewayError> {
        self.calls.0.fetch_add(1, Ordering::SeqCst);
        self.transcript.push((purpose, messages.to_vec()));
        let entry = self
            .queues
            .get_mut(&purpose)
            .and_then(VecDeque::pop_front)
            .ok_or(GatewayError::ScriptExhausted(purpose))?;
        Ok(ProviderReply {
            text: entry.reply_text(),
            usage: entry.usage,
        })
    }
}

/// Lets a test keep a handle on a provider the gateway owns.
pub struct SharedProvider<P>(pub Arc<std::sync::Mutex<P>>);

impl<P: ChatProvider> ChatProvider for SharedProvider<P> {
    fn chat(
        &mut self,
        purpose: Purpose,
        messages: &[ChatMessage],
        output_schema: &Value,
    ) -> Result<ProviderReply, GatewayError> {
        self.0
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .chat(purpose, messages, output_schema)
    }
}
