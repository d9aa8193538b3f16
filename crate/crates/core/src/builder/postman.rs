use std::collections::{BTreeSet, HashSet};
use std::sync::OnceLock;

use serde_json::{json, Map, Value};
use thiserror::Error;

use super::{
    sanitize_name, BuilderError, ExtractionDirective, SuiteEmitter, SuiteMeta, TestCase, TestStep, BASE_URL_VARIABLE,
};
use crate::engine::{placeholder, RequestTemplate};
use crate::negative::TestKind;
use crate::oas::HttpMethod;
use crate::trace::{Direction, KeySegment, Section, TraceKey};

pub const POSTMAN_SCHEMA_URL: &str = "https://schema.getpostman.com/json/collection/v2.1.0/collection.json";

const SCHEMA_TEXT: &str = include_str!("../../schemas/postman-collection-v2.1.0.json");

const ROOT_BODY_EXPR: &str =
    "(function () { try { return pm.response.json(); } catch (e) { return pm.response.text(); } })()";
const SET_PREFIX: &str = "pm.collectionVariables.set(";

#[derive(Debug, Error, PartialEq)]
pub enum CollectionError {
    #[error("collection is not valid JSON: {0}")]
    Json(String),
    #[error("collection does not match the Postman Collection v2.1 schema: {}", .0.join("; "))]
    Schema(Vec<String>),
    #[error("in folder '{folder}', item '{item}' reads variable '{variable}' before any earlier item sets it")]
    Chaining {
        folder: String,
        item: String,
        variable: String,
    },
    #[error("unsupported collection content: {0}")]
    Unsupported(String),
}

/// Emits Postman Collection v2.1 documents: one folder per test case, one
/// request item per step.
#[derive(Debug, Clone, Copy, Default)]
pub struct PostmanEmitter;

impl SuiteEmitter for PostmanEmitter {
    fn file_name(&self, operation_id: &str) -> String {
        format!("{}.postman_collection.json", sanitize_name(operation_id))
    }

    fn emit(&self, suite: &[TestCase], meta: &SuiteMeta) -> Result<String, BuilderError> {
        if suite.is_empty() {
            return Err(BuilderError::EmptySuite);
        }
        let variables: BTreeSet<&str> = suite
            .iter()
            .flat_map(|c| &c.steps)
            .flat_map(|s| &s.extractions)
            .map(|e| e.variable.as_str())
            .collect();
        let mut declared = vec![json!({"key": BASE_URL_VARIABLE, "value": meta.base_url, "type": "string"})];
        declared.extend(variables.iter().map(|v| json!({"key": v, "value": "", "type": "string"})));
        let doc = json!({
            "info": {
                "name": meta.name,
                "schema": POSTMAN_SCHEMA_URL,
            },
            "item": suite.iter().map(folder).collect::<Vec<_>>(),
            "variable": declared,
        });
        let mut text = serde_json::to_string_pretty(&doc).map_err(|e| BuilderError::Serialize(e.to_string()))?;
        text.push('\n');
        Ok(text)
    }
}

fn folder(case: &TestCase) -> Value {
    json!({
        "name": case.name,
        "description": format!(
            "kind: {}\noverrides: {}\n\n{}",
            case.kind.as_str(),
            Value::from(case.overrides.iter().map(ToString::to_string).collect::<Vec<_>>()),
            case.description
        ),
        "item": case.steps.iter().map(item).collect::<Vec<_>>(),
    })
}

fn status_line(class: u16) -> String {
    format!(
        "pm.test(\"status is {class}xx\", function () {{ pm.expect(pm.response.code).to.be.within({}, {}); }});",
        class * 100,
        class * 100 + 99
    )
}

fn source_expr(source: &TraceKey) -> String {
    match source.section() {
        Section::Status => "pm.response.code".into(),
        Section::Header => format!(
            "pm.response.headers.get({})",
            Value::String(source.param_name().unwrap_or_default().to_string())
        ),
        _ if source.segments().is_empty() => ROOT_BODY_EXPR.into(),
        _ => {
            let mut e = String::from("pm.response.json()");
            for s in source.segments() {
                match s {
                    KeySegment::Field(f) => e.push_str(&format!("[{}]", Value::String(f.clone()))),
                    KeySegment::Index(i) => e.push_str(&format!("[{i}]")),
                }
            }
            e
        }
    }
}

fn item(step: &TestStep) -> Value {
    let t = &step.template;
    let mut exec = vec![status_line(step.expected_class)];
    for x in &step.extractions {
        exec.push(format!(
            "{SET_PREFIX}{}, {});",
            Value::String(x.variable.clone()),
            source_expr(&x.source)
        ));
    }
    let mut raw = format!("{}{}", placeholder(BASE_URL_VARIABLE), t.path);
    for (i, (k, v)) in t.query.iter().enumerate() {
        raw.push(if i == 0 { '?' } else { '&' });
        raw.push_str(&format!("{k}={v}"));
    }
    let mut url = Map::new();
    url.insert("raw".into(), json!(raw));
    url.insert("host".into(), json!([placeholder(BASE_URL_VARIABLE)]));
    url.insert("path".into(), json!(t.path.strip_prefix('/').unwrap_or(&t.path).split('/').collect::<Vec<_>>()));
    if !t.query.is_empty() {
        url.insert(
            "query".into(),
            t.query.iter().map(|(k, v)| json!({"key": k, "value": v})).collect(),
        );
    }
    let mut headers: Vec<Value> = t.headers.iter().map(|(k, v)| json!({"key": k, "value": v})).collect();
    if !t.cookies.is_empty() {
        let joined: Vec<String> = t.cookies.iter().map(|(k, v)| format!("{k}={v}")).collect();
        headers.push(json!({"key": "Cookie", "value": joined.join("; ")}));
    }
    let mut request = Map::new();
    request.insert("method".into(), json!(t.method.as_str()));
    request.insert("header".into(), Value::Array(headers));
    if let Some(body) = &t.body {
        request.insert(
            "body".into(),
            json!({"mode": "raw", "raw": body, "options": {"raw": {"language": "json"}}}),
        );
    }
    request.insert("url".into(), Value::Object(url));
    json!({
        "name": step.alias,
        "description": format!("operationId: {}\npath: {}", step.operation_id, step.path_template),
        "event": [{"listen": "test", "script": {"type": "text/javascript", "exec": exec}}],
        "request": request,
    })
}

fn schema_validator() -> &'static jsonschema::Validator {
    static V: OnceLock<jsonschema::Validator> = OnceLock::new();
    V.get_or_init(|| {
        let schema: Value = serde_json::from_str(SCHEMA_TEXT).expect("vendored schema is JSON");
        jsonschema::validator_for(&schema).expect("vendored schema compiles")
    })
}

/// Parses a collection and checks it against the published v2.1 schema and
/// for chaining soundness.
pub fn validate_collection(text: &str) -> Result<Value, CollectionError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| CollectionError::Json(e.to_string()))?;
    let errors: Vec<String> = schema_validator()
        .iter_errors(&doc)
        .take(5)
        .map(|e| format!("{} at '{}'", e, e.instance_path))
        .collect();
    if !errors.is_empty() {
        return Err(CollectionError::Schema(errors));
    }
    check_chaining(&doc)?;
    Ok(doc)
}

fn declared_variables(doc: &Value) -> HashSet<String> {
    doc["variable"]
        .as_array()
        .into_iter()
        .flatten()
        .filter_map(|v| v["key"].as_str().map(str::to_string))
        .filter(|k| k != BASE_URL_VARIABLE)
        .collect()
}

/// Names inside `{{...}}` in `text`.
fn placeholders(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find("{{") {
        let after = &rest[start + 2..];
        let Some(end) = after.find("}}") else { break };
        out.push(&after[..end]);
        rest = &after[end + 2..];
    }
    out
}

fn request_texts(request: &Value) -> Vec<&str> {
    let mut texts = Vec::new();
    if let Some(raw) = request["url"]["raw"].as_str() {
        texts.push(raw);
    }
    for h in request["header"].as_array().into_iter().flatten() {
        texts.extend(h["value"].as_str());
    }
    if let Some(raw) = request["body"]["raw"].as_str() {
        texts.push(raw);
    }
    texts
}

fn set_variable(line: &str) -> Option<(String, &str)> {
    let rest = line.trim().strip_prefix(SET_PREFIX)?;
    let mut stream = serde_json::Deserializer::from_str(rest).into_iter::<String>();
    let name = stream.next()?.ok()?;
    let expr = rest[stream.byte_offset()..].strip_prefix(", ")?.strip_suffix(");")?;
    Some((name, expr))
}

fn script_lines(item: &Value) -> Vec<&str> {
    let mut lines = Vec::new();
    for ev in item["event"].as_array().into_iter().flatten() {
        match &ev["script"]["exec"] {
            Value::Array(a) => lines.extend(a.iter().filter_map(Value::as_str)),
            Value::String(s) => lines.extend(s.lines()),
            _ => {}
        }
    }
    lines
}

/// Every declared collection variable read by an item must be set by a
/// script of a strictly earlier item in the same folder.
pub fn check_chaining(doc: &Value) -> Result<(), CollectionError> {
    let declared = declared_variables(doc);
    for folder in doc["item"].as_array().into_iter().flatten() {
        let folder_name = folder["name"].as_str().unwrap_or_default();
        let mut set: HashSet<String> = HashSet::new();
        let items: Vec<&Value> = match folder["item"].as_array() {
            Some(items) => items.iter().collect(),
            None => vec![folder],
        };
        for item in items {
            for text in request_texts(&item["request"]) {
                for name in placeholders(text) {
                    if declared.contains(name) && !set.contains(name) {
                        return Err(CollectionError::Chaining {
                            folder: folder_name.to_string(),
                            item: item["name"].as_str().unwrap_or_default().to_string(),
                            variable: name.to_string(),
                        });
                    }
                }
            }
            for line in script_lines(item) {
                if let Some((name, _)) = set_variable(line) {
                    set.insert(name);
                }
            }
        }
    }
    Ok(())
}

fn unsupported(what: impl Into<String>) -> CollectionError {
    CollectionError::Unsupported(what.into())
}

fn parse_source(alias: &str, expr: &str) -> Result<TraceKey, CollectionError> {
    let key = if expr == "pm.response.code" {
        TraceKey::status(alias)
    } else if expr == ROOT_BODY_EXPR {
        TraceKey::new(alias, Direction::Response, Section::Body, Vec::new())
    } else if let Some(arg) = expr.strip_prefix("pm.response.headers.get(").and_then(|r| r.strip_suffix(')')) {
        let name: String = serde_json::from_str(arg).map_err(|_| unsupported(format!("header expression '{expr}'")))?;
        TraceKey::param(alias, Direction::Response, Section::Header, &name)
    } else if let Some(mut rest) = expr.strip_prefix("pm.response.json()") {
        let mut segs = Vec::new();
        while !rest.is_empty() {
            let inner = rest.strip_prefix('[').ok_or_else(|| unsupported(format!("expression '{expr}'")))?;
            let mut stream = serde_json::Deserializer::from_str(inner).into_iter::<Value>();
            let seg = match stream.next() {
                Some(Ok(Value::String(s))) => KeySegment::Field(s),
                Some(Ok(Value::Number(n))) => KeySegment::Index(
                    n.as_u64()
                        .and_then(|i| usize::try_from(i).ok())
                        .ok_or_else(|| unsupported(format!("expression '{expr}'")))?,
                ),
                _ => return Err(unsupported(format!("expression '{expr}'"))),
            };
            segs.push(seg);
            rest = inner[stream.byte_offset()..]
                .strip_prefix(']')
                .ok_or_else(|| unsupported(format!("expression '{expr}'")))?;
        }
        if segs.is_empty() {
            return Err(unsupported(format!("expression '{expr}'")));
        }
        TraceKey::new(alias, Direction::Response, Section::Body, segs)
    } else {
        return Err(unsupported(format!("expression '{expr}'")));
    };
    key.map_err(|e| unsupported(e.to_string()))
}

fn parse_status_line(line: &str) -> Option<u16> {
    let rest = line.trim().strip_prefix("pm.test(\"status is ")?;
    let class: u16 = rest.get(..1)?.parse().ok()?;
    (line.trim() == status_line(class)).then_some(class)
}

fn str_field<'a>(v: &'a Value, field: &str, what: &str) -> Result<&'a str, CollectionError> {
    v[field].as_str().ok_or_else(|| unsupported(format!("{what} has no '{field}'")))
}

fn parse_step(item: &Value, declared: &HashSet<String>) -> Result<TestStep, CollectionError> {
    let alias = str_field(item, "name", "item")?.to_string();
    let description = str_field(item, "description", &format!("item '{alias}'"))?;
    let mut operation_id = None;
    let mut path_template = None;
    for line in description.lines() {
        if let Some(v) = line.strip_prefix("operationId: ") {
            operation_id = Some(v.to_string());
        } else if let Some(v) = line.strip_prefix("path: ") {
            path_template = Some(v.to_string());
        }
    }
    let (Some(operation_id), Some(path_template)) = (operation_id, path_template) else {
        return Err(unsupported(format!("item '{alias}' does not name its operation and path")));
    };

    let mut expected_class = None;
    let mut extractions = Vec::new();
    for line in script_lines(item) {
        if let Some(c) = parse_status_line(line) {
            expected_class = Some(c);
        } else if let Some((variable, expr)) = set_variable(line) {
            extractions.push(ExtractionDirective {
                source: parse_source(&alias, expr)?,
                variable,
            });
        } else if !line.trim().is_empty() {
            return Err(unsupported(format!("script line in item '{alias}': {line}")));
        }
    }
    let expected_class = expected_class.ok_or_else(|| unsupported(format!("item '{alias}' asserts no status")))?;

    let request = &item["request"];
    let method: HttpMethod = str_field(request, "method", "request")?.parse().map_err(unsupported)?;
    let url = &request["url"];
    let raw = str_field(url, "raw", "url")?;
    if !raw.starts_with(&placeholder(BASE_URL_VARIABLE)) {
        return Err(unsupported(format!("item '{alias}' URL does not start with the base URL variable")));
    }
    let path_segments: Vec<&str> = url["path"].as_array().into_iter().flatten().filter_map(Value::as_str).collect();
    let path = format!("/{}", path_segments.join("/"));
    let query = url["query"]
        .as_array()
        .into_iter()
        .flatten()
        .map(|q| Ok((str_field(q, "key", "query")?.to_string(), str_field(q, "value", "query")?.to_string())))
        .collect::<Result<Vec<_>, CollectionError>>()?;
    let mut headers = Vec::new();
    let mut cookies = Vec::new();
    for h in request["header"].as_array().into_iter().flatten() {
        let (k, v) = (str_field(h, "key", "header")?, str_field(h, "value", "header")?);
        if k.eq_ignore_ascii_case("cookie") {
            for pair in v.split("; ").filter(|p| !p.is_empty()) {
                let (n, val) = pair.split_once('=').unwrap_or((pair, ""));
                cookies.push((n.to_string(), val.to_string()));
            }
        } else {
            headers.push((k.to_string(), v.to_string()));
        }
    }
    let body = match request.get("body") {
        None | Some(Value::Null) => None,
        Some(b) if b["mode"] == "raw" => Some(str_field(b, "raw", "body")?.to_string()),
        Some(_) => return Err(unsupported(format!("item '{alias}' has a non-raw body"))),
    };
    let mut variables: BTreeSet<String> = BTreeSet::new();
    for text in request_texts(request) {
        variables.extend(placeholders(text).into_iter().filter(|n| declared.contains(*n)).map(str::to_string));
    }
    Ok(TestStep {
        alias,
        operation_id,
        path_template,
        template: RequestTemplate {
            method,
            path,
            query,
            headers,
            cookies,
            body,
            variables: variables.into_iter().collect(),
        },
        extractions,
        expected_class,
    })
}

/// Reads back a collection written by [`PostmanEmitter`] after validating it.
pub fn import_collection(text: &str) -> Result<Vec<TestCase>, CollectionError> {
    let doc = validate_collection(text)?;
    let declared = declared_variables(&doc);
    let mut cases = Vec::new();
    for folder in doc["item"].as_array().into_iter().flatten() {
        let name = str_field(folder, "name", "folder")?.to_string();
        let description = str_field(folder, "description", &format!("folder '{name}'"))?;
        let (head, rest) = description.split_once("\n\n").unwrap_or((description, ""));
        let mut lines = head.lines();
        let kind: TestKind = lines
            .next()
            .and_then(|l| l.strip_prefix("kind: "))
            .and_then(|k| k.parse().ok())
            .ok_or_else(|| unsupported(format!("folder '{name}' does not state its kind")))?;
        let overrides = lines
            .next()
            .and_then(|l| l.strip_prefix("overrides: "))
            .and_then(|l| serde_json::from_str::<Vec<String>>(l).ok())
            .ok_or_else(|| unsupported(format!("folder '{name}' does not list its overrides")))?
            .iter()
            .map(|k| k.parse::<TraceKey>())
            .collect::<Result<BTreeSet<_>, _>>()
            .map_err(|e| unsupported(format!("folder '{name}': {e}")))?;
        let items = folder["item"]
            .as_array()
            .ok_or_else(|| unsupported(format!("'{name}' is not a folder")))?;
        let steps = items
            .iter()
            .map(|i| parse_step(i, &declared))
            .collect::<Result<Vec<_>, _>>()?;
        if steps.is_empty() {
            return Err(unsupported(format!("folder '{name}' has no requests")));
        }
        cases.push(TestCase {
            name,
            kind,
            description: rest.to_string(),
            overrides,
            steps,
        });
    }
    Ok(cases)
}
