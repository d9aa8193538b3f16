#![allow(dead_code)]

use std::sync::{Arc, Mutex};

use happypath_core::llm::{LlmGateway, Purpose, ReplayEntry, ScriptedProvider, SharedProvider, TokenUsage};
use happypath_core::oas::{parse_spec, ApiSpec, DocumentFormat};
use serde_json::{json, Value};

pub fn fixture_spec() -> ApiSpec {
    parse_spec(happypath_fixture::OPENAPI_YAML, DocumentFormat::Yaml).unwrap()
}

pub fn usage(prompt: u64, completion: u64) -> TokenUsage {
    TokenUsage {
        prompt_tokens: prompt,
        completion_tokens: completion,
    }
}

pub fn plan(steps: &[&str]) -> ReplayEntry {
    ReplayEntry::json(
        Purpose::Plan,
        json!({"steps": steps, "usage_guide": "Create what the target needs first, then call it."}),
        TokenUsage::default(),
    )
}

pub fn guide() -> ReplayEntry {
    ReplayEntry::json(Purpose::Plan, json!({"usage_guide": "Fixed sequence."}), TokenUsage::default())
}

pub fn values(values: Value) -> ReplayEntry {
    ReplayEntry::json(Purpose::Values, json!({ "values": values }), TokenUsage::default())
}

pub fn generated(key: &str, value: Value) -> Value {
    json!({"key": key, "source": "generated", "value": value})
}

pub fn dependent(key: &str, target: &str) -> Value {
    json!({"key": key, "source": "dependent", "ref": target})
}

pub fn room_body(alias: &str, room_type: Value, capacity: i64) -> Value {
    generated(
        &format!("{alias}.request.body"),
        json!({"room_type_id": room_type, "name": "Blue", "capacity": capacity}),
    )
}

pub fn gateway(entries: Vec<ReplayEntry>, max_reprompts: u32) -> LlmGateway {
    LlmGateway::new(Box::new(ScriptedProvider::from_entries(entries)), max_reprompts)
}

/// A gateway plus a handle on its provider for transcript assertions.
pub fn shared_gateway(entries: Vec<ReplayEntry>, max_reprompts: u32) -> (LlmGateway, Arc<Mutex<ScriptedProvider>>) {
    let provider = Arc::new(Mutex::new(ScriptedProvider::from_entries(entries)));
    let gw = LlmGateway::new(Box::new(SharedProvider(provider.clone())), max_reprompts);
    (gw, provider)
}

pub fn scenarios(list: Value) -> ReplayEntry {
    ReplayEntry::json(Purpose::Scenarios, json!({ "scenarios": list }), TokenUsage::default())
}

pub fn overrides(list: Value) -> ReplayEntry {
    ReplayEntry::json(Purpose::InvalidValues, json!({ "overrides": list }), TokenUsage::default())
}

/// Replies that build the happy path of `setAvailability` on the fixture.
pub fn availability_happy_entries() -> Vec<ReplayEntry> {
    vec![
        plan(&["createRoom", "setAvailability"]),
        values(json!([room_body("createRoom", json!("std"), 2)])),
        values(json!([
            dependent("setAvailability.request.path.roomId", "createRoom.response.body.id"),
            generated("setAvailability.request.body.from", json!("2024-01-01")),
            generated("setAvailability.request.body.until", json!("2024-02-01")),
            generated("setAvailability.request.body.count", json!(3)),
        ])),
    ]
}
