use serde_json::{json, Value};

use super::{HappyPathConfig, HappyPathError, ValueAssignment};
use crate::llm::{ChatMessage, LlmGateway, Purpose, StructuredRequest, ValidatedError};
use crate::oas::{operation_summary, ApiOperation, ParamLocation};
use crate::trace::{ExecutionTrace, KeySegment, Literal, Section, TraceKey, TraceValue};

const VALUES_SYSTEM: &str = "You generate concrete input values for one request of a REST API \
test scenario so that the request succeeds with a 2xx response. Every value is either \"generated\" \
(a literal JSON value you choose, given in \"value\") or \"dependent\" (a reference, given in \"ref\", \
to a key already stored in the execution trace; use it when the value must come from an earlier \
response, such as the identifier of a created resource). Keys have the form \
<alias>.request.<path|query|header|cookie|body> followed by .field or [index] parts, for example \
s.request.path.id, s.request.query.limit or s.request.body.address.city. An object or array value \
may be given for a key; it is split into its leaves.";

/// Trace entries beyond this are summarized in prompts.
const PROMPT_TRACE_LIMIT: usize = 400;

/// The rejected attempt fed back to the model.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorError {
    pub status: u16,
    pub body: String,
    pub previous: Vec<(TraceKey, TraceValue)>,
}

/// Everything the value generator sees for one step.
pub struct ValueRequest<'a> {
    pub op: &'a ApiOperation,
    pub alias: &'a str,
    pub usage_guide: &'a str,
    pub trace: &'a ExecutionTrace,
    /// Response headers of earlier steps; referencing one stores it in the
    /// trace on demand.
    pub response_headers: &'a [(TraceKey, String)],
    pub prior_error: Option<&'a PriorError>,
    pub guidance: Option<&'a str>,
}

fn entry_line(key: &TraceKey, value: &TraceValue) -> String {
    match value {
        TraceValue::Generated(Literal::Json(v)) => format!("{key} = {v}"),
        TraceValue::Generated(Literal::Absent) => format!("{key} = <absent>"),
        TraceValue::Dependent(r) => format!("{key} = ref {r}"),
    }
}

/// One `key = value` line per entry, in trace order.
pub fn render_trace_for_prompt(trace: &ExecutionTrace) -> String {
    if trace.is_empty() {
        return "(empty)".into();
    }
    let mut lines: Vec<String> = trace
        .entries()
        .iter()
        .take(PROMPT_TRACE_LIMIT)
        .map(|(k, v)| entry_line(k, v))
        .collect();
    if trace.len() > PROMPT_TRACE_LIMIT {
        lines.push(format!("[... {} more entries]", trace.len() - PROMPT_TRACE_LIMIT));
    }
    lines.join("\n")
}

fn output_schema() -> Value {
    json!({
        "type": "object",
        "required": ["values"],
        "properties": {
            "values": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["key", "source"],
                    "properties": {
                        "key": {"type": "string"},
                        "source": {"enum": ["generated", "dependent"]},
                        "value": {},
                        "ref": {"type": "string"}
                    }
                }
            }
        }
    })
}

/// Asks the model for one step's request values and checks them against the
/// operation and the trace.
pub fn generate_step_values(
    gateway: &mut LlmGateway,
    req: &ValueRequest<'_>,
    cfg: &HappyPathConfig,
) -> Result<ValueAssignment, HappyPathError> {
    let mut user = format!(
        "Step alias: {}\n\nOperation:\n{}\n\nUsage guide:\n{}\n\nExecution trace so far:\n{}\n",
        req.alias,
        operation_summary(req.op, cfg.summary_budget),
        if req.usage_guide.trim().is_empty() { "(none)" } else { req.usage_guide.trim() },
        render_trace_for_prompt(req.trace),
    );
    if !req.response_headers.is_empty() {
        user.push_str("\nResponse headers of earlier steps, usable as refs:\n");
        for (k, v) in req.response_headers {
            user.push_str(&format!("{k} = {v}\n"));
        }
    }
    if let Some(g) = req.guidance.map(str::trim).filter(|g| !g.is_empty()) {
        user.push_str(&format!("\nAdditional information from the user:\n{g}\n"));
    }
    if let Some(prior) = req.prior_error {
        user.push_str(&format!(
            "\nThe previous attempt for this step was rejected with HTTP {}. Response body:\n{}\n\nValues used in that attempt:\n",
            prior.status, prior.body
        ));
        for (k, v) in &prior.previous {
            user.push_str(&entry_line(k, v));
            user.push('\n');
        }
        user.push_str("Change the values so that the request succeeds.\n");
    }
    user.push_str(&format!(
        "\nGive values for every required parameter and body property. Keys must start with \"{}.request.\".",
        req.alias
    ));

    let sreq = StructuredRequest {
        messages: vec![ChatMessage::system(VALUES_SYSTEM), ChatMessage::user(user)],
        output_schema: output_schema(),
        purpose: Purpose::Values,
    };
    match gateway.complete_validated(&sreq, |v| parse_assignment(req, v)) {
        Ok(c) => Ok(c.value),
        Err(ValidatedError::Gateway(g)) => Err(g.into()),
        Err(ValidatedError::Rejected { reason, .. }) => Err(HappyPathError::AssignmentInvalid(reason)),
    }
}

fn expand_literal(key: TraceKey, value: &Value, out: &mut Vec<(TraceKey, TraceValue)>) {
    match value {
        Value::Object(m) if !m.is_empty() => {
            for (name, child) in m {
                expand_literal(key.child(KeySegment::Field(name.clone())), child, out);
            }
        }
        Value::Array(items) if !items.is_empty() => {
            for (i, child) in items.iter().enumerate() {
                expand_literal(key.child(KeySegment::Index(i)), child, out);
            }
        }
        leaf => out.push((key, TraceValue::Generated(Literal::Json(leaf.clone())))),
    }
}

/// Builds an assignment from the model's reply, rejecting anything that
/// cannot be sent as a valid request.
pub(crate) fn parse_assignment(req: &ValueRequest<'_>, reply: &Value) -> Result<ValueAssignment, String> {
    let alias = req.alias;
    let known = |k: &TraceKey| req.trace.contains(k) || req.response_headers.iter().any(|(h, _)| h == k);
    let mut entries: Vec<(TraceKey, TraceValue)> = Vec::new();
    for item in reply["values"].as_array().into_iter().flatten() {
        let key_text = item["key"].as_str().unwrap_or_default();
        let key = TraceKey::parse_request_key(alias, key_text).map_err(|e| e.to_string())?;
        match item["source"].as_str() {
            Some("dependent") => {
                let target_text = item["ref"]
                    .as_str()
                    .ok_or_else(|| format!("dependent value for '{key}' has no \"ref\""))?;
                let target: TraceKey = target_text.trim().parse().map_err(|e| format!("ref of '{key}': {e}"))?;
                if target.alias() == alias {
                    return Err(format!("'{key}' refers to its own step"));
                }
                if known(&target) {
                    entries.push((key, TraceValue::Dependent(target)));
                    continue;
                }
                // A reference to an object or array maps leaf by leaf.
                let leaves: Vec<&TraceKey> = req.trace.keys().filter(|k| k.starts_with(&target)).collect();
                if leaves.is_empty() {
                    return Err(format!("'{key}' refers to '{target}', which is not in the execution trace"));
                }
                let depth = target.segments().len();
                for leaf in leaves {
                    let mut k = key.clone();
                    for seg in &leaf.segments()[depth..] {
                        k = k.child(seg.clone());
                    }
                    entries.push((k, TraceValue::Dependent(leaf.clone())));
                }
            }
            Some("generated") => {
                let value = item
                    .get("value")
                    .ok_or_else(|| format!("generated value for '{key}' has no \"value\""))?;
                expand_literal(key, value, &mut entries);
            }
            other => return Err(format!("unknown source {other:?} for '{key}'")),
        }
    }
    for (i, (a, _)) in entries.iter().enumerate() {
        for (b, _) in &entries[i + 1..] {
            if a == b {
                return Err(format!("key '{a}' is assigned twice"));
            }
            if a.starts_with(b) || b.starts_with(a) {
                return Err(format!("keys '{a}' and '{b}' overlap"));
            }
        }
    }
    check_coverage(req.op, &entries)?;
    Ok(ValueAssignment {
        step_alias: alias.to_string(),
        entries,
    })
}

fn check_coverage(op: &ApiOperation, entries: &[(TraceKey, TraceValue)]) -> Result<(), String> {
    let covers = |section: Section, name: &str| {
        entries.iter().any(|(k, _)| {
            k.section() == section
                && k.param_name().is_some_and(|n| {
                    if section == Section::Header {
                        n.eq_ignore_ascii_case(name)
                    } else {
                        n == name
                    }
                })
        })
    };
    let mut missing: Vec<String> = Vec::new();
    for name in op.path_placeholders() {
        if !covers(Section::Path, name) {
            missing.push(format!("path.{name}"));
        }
    }
    for p in &op.parameters {
        let section = match p.location {
            ParamLocation::Query => Section::Query,
            ParamLocation::Header => Section::Header,
            ParamLocation::Cookie => Section::Cookie,
            _ => continue,
        };
        if p.required && !covers(section, &p.name) {
            missing.push(format!("{}.{}", p.location, p.name));
        }
    }
    let body_keys: Vec<&TraceKey> = entries
        .iter()
        .map(|(k, _)| k)
        .filter(|k| k.section() == Section::Body)
        .collect();
    let whole_body = body_keys.iter().any(|k| k.segments().is_empty());
    if op.request_body_required && body_keys.is_empty() {
        missing.push("body".into());
    } else if !body_keys.is_empty() && !whole_body {
        if let Some(schema) = &op.request_body_schema {
            for prop in &schema.required_properties {
                let present = body_keys
                    .iter()
                    .any(|k| matches!(k.segments().first(), Some(KeySegment::Field(f)) if f == prop));
                if !present {
                    missing.push(format!("body.{prop}"));
                }
            }
        }
    }
    if missing.is_empty() {
        Ok(())
    } else {
        Err(format!("required values missing: {}", missing.join(", ")))
    }
}
