use std::fmt;

use indexmap::IndexMap;
use serde_json::{json, Value};

use super::scenarios::{final_request_lines, same_locator};
use super::{violates, InvalidValueSet, NegativeError, TestKind, TestScenario};
use crate::happy_path::HappyPath;
use crate::llm::{ChatMessage, GatewayError, LlmGateway, Purpose, StructuredRequest, ValidatedError};
use crate::oas::{ApiOperation, ConstraintCatalog};
use crate::trace::{resolve_all, Literal, TraceKey};

const INVALID_SYSTEM: &str = "You produce the concrete invalid values for a negative REST API \
test. Replace exactly the listed target keys and nothing else. To leave a parameter or property out \
of the request entirely, give {\"key\": ..., \"absent\": true} instead of a value.";

enum Problem {
    Malformed(String),
    NotViolated(String),
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Problem::Malformed(m) | Problem::NotViolated(m) => f.write_str(m),
        }
    }
}

fn output_schema() -> Value {
    json!({
        "type": "object",
        "required": ["overrides"],
        "properties": {
            "overrides": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["key"],
                    "properties": {
                        "key": {"type": "string"},
                        "value": {},
                        "absent": {"type": "boolean"}
                    }
                }
            }
        }
    })
}

/// Asks for the invalid values of one scenario. Structural overrides are
/// checked against the cited constraint and re-prompted until they break it.
pub fn generate_invalid_values(
    gateway: &mut LlmGateway,
    op: &ApiOperation,
    scenario: &TestScenario,
    happy: &HappyPath,
    catalog: &ConstraintCatalog,
) -> Result<InvalidValueSet, NegativeError> {
    let resolved = resolve_all(&happy.trace)?;
    let alias = happy.target_alias();
    let constraints: Vec<_> = match &scenario.constraint {
        Some(c) if scenario.kind == TestKind::Structural => catalog
            .entries
            .iter()
            .filter(|e| e.kind() == c.kind && same_locator(&e.locator, &c.locator))
            .collect(),
        _ => Vec::new(),
    };

    let mut user = format!(
        "Operation: {}\n\nA request that succeeded (step alias {alias}):\n{}\n\nScenario {}: {}\n",
        op.signature(),
        final_request_lines(happy)?,
        scenario.name,
        scenario.description
    );
    if !constraints.is_empty() {
        user.push_str("Constraint to break:\n");
        for c in &constraints {
            user.push_str(&format!("- {c}\n"));
        }
    }
    user.push_str("\nTarget keys and their current valid values:\n");
    for k in &scenario.target_keys {
        let v = resolved.get(k).map_or("<missing>".to_string(), ToString::to_string);
        user.push_str(&format!("{k} = {v}\n"));
    }
    user.push_str("\nGive one override per target key in \"overrides\".");

    let req = StructuredRequest {
        messages: vec![ChatMessage::system(INVALID_SYSTEM), ChatMessage::user(user)],
        output_schema: output_schema(),
        purpose: Purpose::InvalidValues,
    };
    let check = |reply: &Value| -> Result<IndexMap<TraceKey, Literal>, Problem> {
        let mut overrides = IndexMap::new();
        for item in reply["overrides"].as_array().into_iter().flatten() {
            let key = TraceKey::parse_request_key(alias, item["key"].as_str().unwrap_or_default())
                .map_err(|e| Problem::Malformed(e.to_string()))?;
            let lit = if item["absent"].as_bool() == Some(true) {
                Literal::Absent
            } else {
                Literal::Json(
                    item.get("value")
                        .cloned()
                        .ok_or_else(|| Problem::Malformed(format!("override for '{key}' has neither value nor absent")))?,
                )
            };
            if overrides.insert(key.clone(), lit).is_some() {
                return Err(Problem::Malformed(format!("'{key}' is overridden twice")));
            }
        }
        let given: std::collections::BTreeSet<&TraceKey> = overrides.keys().collect();
        let wanted: std::collections::BTreeSet<&TraceKey> = scenario.target_keys.iter().collect();
        if given != wanted {
            let list = |s: &std::collections::BTreeSet<&TraceKey>| {
                s.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
            };
            return Err(Problem::Malformed(format!(
                "overrides must cover exactly the target keys [{}], got [{}]",
                list(&wanted),
                list(&given)
            )));
        }
        for (key, lit) in &overrides {
            for entry in &constraints {
                let nullable = op.schema_at(&entry.locator).is_some_and(|s| s.nullable);
                if !violates(&entry.constraint, nullable, lit, resolved.get(key)) {
                    return Err(Problem::NotViolated(format!(
                        "{lit} for '{key}' still satisfies {}",
                        entry.constraint
                    )));
                }
            }
        }
        Ok(overrides)
    };
    match gateway.complete_validated(&req, check) {
        Ok(c) => Ok(InvalidValueSet {
            scenario: scenario.name.clone(),
            overrides: c.value,
        }),
        Err(ValidatedError::Gateway(g)) => Err(g.into()),
        Err(ValidatedError::Rejected {
            reason: Problem::NotViolated(reason),
            ..
        }) => Err(NegativeError::ConstraintNotViolated {
            scenario: scenario.name.clone(),
            reason,
        }),
        Err(ValidatedError::Rejected {
            attempts,
            reason: Problem::Malformed(last_error),
        }) => Err(GatewayError::MalformedAfterRetries { attempts, last_error }.into()),
    }
}
