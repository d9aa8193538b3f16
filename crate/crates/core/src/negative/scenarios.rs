use std::collections::{BTreeSet, HashSet};

use serde_json::{json, Value};

use super::{locator_of, CitedConstraint, NegativeError, ScenarioConfig, TestKind, TestScenario};
use crate::happy_path::HappyPath;
use crate::llm::{ChatMessage, LlmGateway, Purpose, StructuredRequest};
use crate::oas::{operation_summary, ApiOperation, ConstraintCatalog, ConstraintKind, ParamLocation, ParamLocator};
use crate::trace::{resolve_all, Direction, TraceKey};

const STRUCTURAL_SYSTEM: &str = "You design negative tests for REST APIs. A structural test \
takes a request that is known to succeed and breaks exactly one constraint declared in the API \
specification (a type, format, enum, range, length, pattern or required-field rule), so a correct \
service must answer with a 4xx client error. Every scenario must cite the constraint it breaks by \
its locator and kind, exactly as listed.";

const FUNCTIONAL_SYSTEM: &str = "You design negative tests for REST APIs. A functional test takes \
a request that is known to succeed and changes one or a few values so that a business rule is \
broken that the API specification does not state explicitly, for example an ordering between two \
dates, a total that must match its parts, or a reference to something that cannot exist. A correct \
service must answer with a 4xx client error.";

fn output_schema() -> Value {
    json!({
        "type": "object",
        "required": ["scenarios"],
        "properties": {
            "scenarios": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["name", "description", "target_keys"],
                    "properties": {
                        "name": {"type": "string"},
                        "description": {"type": "string"},
                        "target_keys": {"type": "array", "items": {"type": "string"}},
                        "constraint": {
                            "type": "object",
                            "required": ["locator", "kind"],
                            "properties": {
                                "locator": {"type": "string"},
                                "kind": {"type": "string"}
                            }
                        }
                    }
                }
            }
        }
    })
}

pub(crate) fn same_locator(a: &ParamLocator, b: &ParamLocator) -> bool {
    if a.location == ParamLocation::Header && b.location == ParamLocation::Header {
        a.to_string().eq_ignore_ascii_case(&b.to_string())
    } else {
        a == b
    }
}

/// The final step's request values as prompt lines.
pub(crate) fn final_request_lines(happy: &HappyPath) -> Result<String, NegativeError> {
    let resolved = resolve_all(&happy.trace)?;
    let alias = happy.target_alias();
    let lines: Vec<String> = resolved
        .iter()
        .filter(|(k, _)| k.alias() == alias && k.direction() == Direction::Request)
        .map(|(k, v)| format!("{k} = {v}"))
        .collect();
    Ok(if lines.is_empty() {
        "(no parameters)".into()
    } else {
        lines.join("\n")
    })
}

/// Asks for structural and functional scenarios and keeps those that pass
/// validation. Proposals that fail are logged and dropped.
pub fn generate_scenarios(
    gateway: &mut LlmGateway,
    op: &ApiOperation,
    happy: &HappyPath,
    catalog: &ConstraintCatalog,
    kinds: &[TestKind],
    cfg: &ScenarioConfig,
) -> Result<Vec<TestScenario>, NegativeError> {
    let requested: BTreeSet<TestKind> = kinds.iter().copied().filter(|k| *k != TestKind::HappyPath).collect();
    if requested.is_empty() {
        return Ok(Vec::new());
    }
    let alias = happy.target_alias().to_string();
    let final_keys: HashSet<&TraceKey> = happy
        .trace
        .keys()
        .filter(|k| k.alias() == alias && k.direction() == Direction::Request)
        .collect();
    let request_lines = final_request_lines(happy)?;
    let mut names: HashSet<String> = HashSet::new();
    let mut out = Vec::new();

    for kind in requested {
        let limit = cfg.limit(kind);
        if limit == 0 {
            continue;
        }
        let (system, extra) = match kind {
            TestKind::Structural => {
                let mut list = String::from("\nDeclared constraints (locator: constraint):\n");
                if catalog.is_empty() {
                    list.push_str("(none)\n");
                }
                for e in &catalog.entries {
                    list.push_str(&format!("- {e}\n"));
                }
                list.push_str(
                    "\nCite the broken constraint in \"constraint\" as {\"locator\": ..., \"kind\": ...}. \
Names are lowerCamelCase and end with _ST, for example roomTypeIdWrongType_ST.\n",
                );
                (STRUCTURAL_SYSTEM, list)
            }
            _ => (
                FUNCTIONAL_SYSTEM,
                "\nNames are lowerCamelCase and end with _FN, for example untilBeforeFrom_FN.\n".to_string(),
            ),
        };
        let user = format!(
            "Operation under test:\n{}\n\nA request that succeeded (step alias {alias}):\n{request_lines}\n{extra}\n\
Propose at most {limit} {kind} scenarios. \"target_keys\" lists the request keys above whose values \
the scenario replaces; all other values stay unchanged. Describe in \"description\" why a 4xx response \
is expected.",
            operation_summary(op, cfg.summary_budget),
        );
        let req = StructuredRequest {
            messages: vec![ChatMessage::system(system), ChatMessage::user(user)],
            output_schema: output_schema(),
            purpose: Purpose::Scenarios,
        };
        let reply = gateway.complete_structured(&req)?.value;
        let mut kept = 0;
        for (i, item) in reply["scenarios"].as_array().into_iter().flatten().enumerate() {
            if kept == limit {
                tracing::warn!(kind = %kind, limit, "dropping scenarios beyond the budget");
                break;
            }
            match validate(item, i, kind, &alias, &final_keys, catalog, &names) {
                Ok(s) => {
                    names.insert(s.name.clone());
                    out.push(s);
                    kept += 1;
                }
                Err(reason) => tracing::warn!(operation = %op.id, kind = %kind, "dropped scenario proposal: {reason}"),
            }
        }
    }
    if out.is_empty() {
        return Err(NegativeError::NoScenarios);
    }
    Ok(out)
}

fn scenario_name(raw: &str, index: usize, kind: TestKind) -> String {
    let mut base: String = raw
        .trim()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
        .collect();
    for suffix in ["_ST", "_FN"] {
        if let Some(stripped) = base.strip_suffix(suffix) {
            base = stripped.to_string();
        }
    }
    if base.trim_matches('_').is_empty() {
        base = format!("scenario{}", index + 1);
    }
    format!("{base}{}", kind.name_suffix())
}

fn validate(
    item: &Value,
    index: usize,
    kind: TestKind,
    alias: &str,
    final_keys: &HashSet<&TraceKey>,
    catalog: &ConstraintCatalog,
    names: &HashSet<String>,
) -> Result<TestScenario, String> {
    let name = scenario_name(item["name"].as_str().unwrap_or_default(), index, kind);
    if names.contains(&name) {
        return Err(format!("name '{name}' is already used"));
    }
    let description = item["description"].as_str().unwrap_or_default().trim().to_string();
    if description.is_empty() {
        return Err(format!("'{name}' has no description"));
    }
    let mut target_keys = BTreeSet::new();
    for t in item["target_keys"].as_array().into_iter().flatten() {
        let text = t.as_str().ok_or_else(|| format!("'{name}' has a non-string target key"))?;
        let key = TraceKey::parse_request_key(alias, text).map_err(|e| format!("'{name}': {e}"))?;
        if !final_keys.contains(&key) {
            return Err(format!("'{name}' targets '{key}', which the happy path did not send"));
        }
        target_keys.insert(key);
    }
    if target_keys.is_empty() {
        return Err(format!("'{name}' has no target keys"));
    }
    let constraint = if kind == TestKind::Structural {
        let c = &item["constraint"];
        let locator: ParamLocator = c["locator"]
            .as_str()
            .ok_or_else(|| format!("'{name}' cites no constraint"))?
            .parse()
            .map_err(|e| format!("'{name}': {e}"))?;
        let ckind = c["kind"]
            .as_str()
            .and_then(ConstraintKind::parse)
            .ok_or_else(|| format!("'{name}' cites an unknown constraint kind"))?;
        let entry = catalog
            .entries
            .iter()
            .find(|e| e.kind() == ckind && same_locator(&e.locator, &locator))
            .ok_or_else(|| format!("'{name}' cites '{locator}' {ckind}, which is not a declared constraint"))?;
        for k in &target_keys {
            let matches = locator_of(k).is_some_and(|l| same_locator(&l, &entry.locator));
            if !matches {
                return Err(format!("'{name}' targets '{k}', which '{}' does not constrain", entry.locator));
            }
        }
        Some(CitedConstraint {
            locator: entry.locator.clone(),
            kind: ckind,
        })
    } else {
        None
    };
    Ok(TestScenario {
        name,
        kind,
        description,
        target_keys,
        constraint,
        expected_status_class: "4xx".into(),
    })
}
