use std::collections::BTreeMap;

use indexmap::IndexMap;
use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::EngineError;
use crate::oas::{is_json_media_type, ApiOperation, HttpMethod, ParamLocation};
use crate::trace::{unflatten, Direction, KeySegment, Literal, ResolvedValues, Section, TraceKey};

/// Everything outside RFC 3986 unreserved characters is encoded, so a space
/// becomes `%20` rather than `+`.
const COMPONENT: &AsciiSet = &NON_ALPHANUMERIC.remove(b'-').remove(b'.').remove(b'_').remove(b'~');

pub fn encode_component(text: &str) -> String {
    utf8_percent_encode(text, COMPONENT).to_string()
}

/// Text form of a scalar as it appears in a URL or header.
pub fn scalar_text(value: &Value) -> String {
    match value {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// RFC 9110 `token`.
pub fn is_token(name: &str) -> bool {
    !name.is_empty()
        && name
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b"!#$%&'*+-.^_`|~".contains(&b))
}

/// Placeholder syntax shared with the emitted collections.
pub fn placeholder(name: &str) -> String {
    format!("{{{{{name}}}}}")
}

/// A concrete request ready to send.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpRequestPlan {
    pub method: HttpMethod,
    pub url: String,
    pub headers: Vec<(String, String)>,
    pub cookies: Vec<(String, String)>,
    pub body: Option<String>,
}

/// One request value: a literal, or a run-time variable standing in for a
/// value produced by an earlier step. `sample` is the value seen when the
/// happy path was built and decides how the placeholder is quoted.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Literal(Literal),
    Variable { name: String, sample: Value },
}

/// A request whose values may still contain `{{variable}}` placeholders.
/// Path and query text is already percent-encoded; placeholders are not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestTemplate {
    pub method: HttpMethod,
    pub path: String,
    pub query: Vec<(String, String)>,
    pub headers: Vec<(String, String)>,
    pub cookies: Vec<(String, String)>,
    pub body: Option<String>,
    /// Variables referenced anywhere in the template, sorted.
    pub variables: Vec<String>,
}

impl RequestTemplate {
    /// Substitutes variables and prefixes the base URL. A variable whose
    /// value is a string is inserted into the body without quotes, since
    /// the template already quotes it.
    pub fn instantiate(&self, base_url: &str, vars: &BTreeMap<String, Value>) -> Result<HttpRequestPlan, EngineError> {
        for v in &self.variables {
            if !vars.contains_key(v) {
                return Err(EngineError::UnresolvedVariable(v.clone()));
            }
        }
        let url_sub = |text: &str| substitute(text, &self.variables, vars, |v| encode_component(&scalar_text(v)));
        let raw_sub = |text: &str| substitute(text, &self.variables, vars, scalar_text);
        let mut url = format!("{}{}", base_url.trim_end_matches('/'), url_sub(&self.path));
        for (i, (k, v)) in self.query.iter().enumerate() {
            url.push(if i == 0 { '?' } else { '&' });
            url.push_str(&url_sub(k));
            url.push('=');
            url.push_str(&url_sub(v));
        }
        let headers = self.headers.iter().map(|(k, v)| (k.clone(), raw_sub(v))).collect();
        let cookies = self.cookies.iter().map(|(k, v)| (k.clone(), raw_sub(v))).collect();
        let body = self.body.as_deref().map(|b| {
            substitute(b, &self.variables, vars, |v| match v {
                Value::String(s) => {
                    let quoted = Value::String(s.clone()).to_string();
                    quoted[1..quoted.len() - 1].to_string()
                }
                other => other.to_string(),
            })
        });
        Ok(HttpRequestPlan {
            method: self.method,
            url,
            headers,
            cookies,
            body,
        })
    }
}

fn substitute(
    text: &str,
    names: &[String],
    vars: &BTreeMap<String, Value>,
    render: impl Fn(&Value) -> String,
) -> String {
    if !text.contains("{{") {
        return text.to_string();
    }
    let mut out = text.to_string();
    for name in names {
        if let Some(v) = vars.get(name) {
            out = out.replace(&placeholder(name), &render(v));
        }
    }
    out
}

/// Builds a template from one step's request cells, in trace order.
pub fn build_template(op: &ApiOperation, cells: &[(TraceKey, Cell)]) -> Result<RequestTemplate, EngineError> {
    let mut alias: Option<&str> = None;
    for (k, _) in cells {
        if k.direction() != Direction::Request || alias.is_some_and(|a| a != k.alias()) {
            return Err(EngineError::ForeignKey(k.to_string()));
        }
        alias = Some(k.alias());
    }
    let mut variables: Vec<String> = Vec::new();
    let mut note_var = |name: &str| {
        if !variables.iter().any(|v| v == name) {
            variables.push(name.to_string());
        }
    };

    // Non-body sections: values grouped by parameter name, in trace order.
    let mut groups: BTreeMap<Section, IndexMap<String, Vec<(String, String)>>> = BTreeMap::new();
    let mut mentioned: BTreeMap<Section, Vec<String>> = BTreeMap::new();
    let mut body_cells: Vec<(&[KeySegment], Literal)> = Vec::new();
    let mut body_vars: Vec<(String, String, bool)> = Vec::new();

    for (key, cell) in cells {
        let section = key.section();
        if section == Section::Status {
            return Err(EngineError::ForeignKey(key.to_string()));
        }
        if section == Section::Body {
            let lit = match cell {
                Cell::Literal(l) => l.clone(),
                Cell::Variable { name, sample } => {
                    note_var(name);
                    let sentinel = format!("\u{7f}hp-var:{name}\u{7f}");
                    body_vars.push((
                        Value::String(sentinel.clone()).to_string(),
                        name.clone(),
                        sample.is_string(),
                    ));
                    Literal::Json(Value::String(sentinel))
                }
            };
            body_cells.push((key.segments(), lit));
            continue;
        }
        let segs = key.segments();
        let Some(KeySegment::Field(name)) = segs.first() else {
            return Err(EngineError::ForeignKey(key.to_string()));
        };
        mentioned.entry(section).or_default().push(name.clone());
        let text = match cell {
            Cell::Literal(Literal::Absent) => continue,
            Cell::Literal(Literal::Json(Value::Array(a))) if a.is_empty() => continue,
            Cell::Literal(Literal::Json(Value::Object(o))) if o.is_empty() => continue,
            Cell::Literal(Literal::Json(v)) => match section {
                Section::Path | Section::Query => encode_component(&scalar_text(v)),
                _ => scalar_text(v),
            },
            Cell::Variable { name, .. } => {
                note_var(name);
                placeholder(name)
            }
        };
        // Nested object members of query parameters use deepObject names.
        let mut param_name = name.clone();
        if section == Section::Query {
            for s in &segs[1..] {
                match s {
                    KeySegment::Field(f) => param_name.push_str(&format!("[{f}]")),
                    KeySegment::Index(_) if param_name != *name => param_name.push_str("[]"),
                    KeySegment::Index(_) => {}
                }
            }
        }
        groups
            .entry(section)
            .or_default()
            .entry(name.clone())
            .or_default()
            .push((param_name, text));
    }

    let was_mentioned = |section: Section, name: &str| {
        mentioned.get(&section).is_some_and(|names| {
            names.iter().any(|n| {
                if section == Section::Header {
                    n.eq_ignore_ascii_case(name)
                } else {
                    n == name
                }
            })
        })
    };
    for p in &op.parameters {
        let section = match p.location {
            ParamLocation::Path => Section::Path,
            ParamLocation::Query => Section::Query,
            ParamLocation::Header => Section::Header,
            ParamLocation::Cookie => Section::Cookie,
            ParamLocation::Body => continue,
        };
        if (p.required || section == Section::Path) && !was_mentioned(section, &p.name) {
            return Err(EngineError::MissingRequiredValue(format!("{}.{}", p.location, p.name)));
        }
    }

    let empty = IndexMap::new();
    let path_groups = groups.get(&Section::Path).unwrap_or(&empty);
    let mut path = String::new();
    let mut rest = op.path_template.as_str();
    while let Some(start) = rest.find('{') {
        let Some(len) = rest[start..].find('}') else { break };
        path.push_str(&rest[..start]);
        let name = &rest[start + 1..start + len];
        if !was_mentioned(Section::Path, name) {
            return Err(EngineError::MissingRequiredValue(format!("path.{name}")));
        }
        if let Some(values) = path_groups.get(name) {
            let joined: Vec<&str> = values.iter().map(|(_, v)| v.as_str()).collect();
            path.push_str(&joined.join(","));
        }
        rest = &rest[start + len + 1..];
    }
    path.push_str(rest);

    let query = groups
        .get(&Section::Query)
        .map(|g| {
            g.values()
                .flatten()
                .map(|(n, v)| (encode_component(n), v.clone()))
                .collect()
        })
        .unwrap_or_default();

    let joined = |section: Section| -> Vec<(String, String)> {
        groups
            .get(&section)
            .map(|g| {
                g.iter()
                    .map(|(name, vals)| {
                        let parts: Vec<&str> = vals.iter().map(|(_, v)| v.as_str()).collect();
                        (name.clone(), parts.join(","))
                    })
                    .collect()
            })
            .unwrap_or_default()
    };
    let mut headers = joined(Section::Header);
    for (name, value) in &headers {
        if !is_token(name) {
            return Err(EngineError::InvalidHeaderName(name.clone()));
        }
        if value.contains(['\r', '\n']) {
            return Err(EngineError::InvalidHeaderValue(name.clone()));
        }
    }
    let cookies = joined(Section::Cookie);
    for (name, value) in &cookies {
        if !is_token(name) || value.contains([';', '\r', '\n']) {
            return Err(EngineError::InvalidHeaderValue(format!("cookie {name}")));
        }
    }

    let body_value = unflatten(body_cells.iter().map(|(s, l)| (*s, l)))
        .map_err(|e| EngineError::UnflattenConflict(e.to_string()))?;
    let body_mentioned = !body_cells.is_empty();
    if op.request_body_required && !body_mentioned {
        return Err(EngineError::MissingRequiredValue("body".into()));
    }
    let body = match body_value {
        None => None,
        Some(v) => {
            if let Some(media) = &op.request_body_media_type {
                if !is_json_media_type(media) {
                    return Err(EngineError::UnsupportedMediaType(media.clone()));
                }
            }
            let mut text = serde_json::to_string(&v).map_err(|e| EngineError::Serialize(e.to_string()))?;
            for (sentinel, name, quoted) in &body_vars {
                let ph = placeholder(name);
                let replacement = if *quoted { format!("\"{ph}\"") } else { ph };
                text = text.replace(sentinel, &replacement);
            }
            if !headers.iter().any(|(n, _)| n.eq_ignore_ascii_case("content-type")) {
                let media = op
                    .request_body_media_type
                    .clone()
                    .filter(|m| m != "*/*")
                    .unwrap_or_else(|| "application/json".into());
                headers.push(("Content-Type".into(), media));
            }
            Some(text)
        }
    };

    variables.sort();
    Ok(RequestTemplate {
        method: op.method,
        path,
        query,
        headers,
        cookies,
        body,
        variables,
    })
}

/// Renders one step's resolved request values into a concrete request.
pub fn render_request(op: &ApiOperation, resolved: &ResolvedValues, base_url: &str) -> Result<HttpRequestPlan, EngineError> {
    let cells: Vec<(TraceKey, Cell)> = resolved
        .iter()
        .map(|(k, l)| (k.clone(), Cell::Literal(l.clone())))
        .collect();
    build_template(op, &cells)?.instantiate(base_url, &BTreeMap::new())
}

/// The request entries of one step, in trace order.
pub fn step_request(resolved: &ResolvedValues, alias: &str) -> ResolvedValues {
    resolved
        .iter()
        .filter(|(k, _)| k.alias() == alias && k.direction() == Direction::Request)
        .map(|(k, l)| (k.clone(), l.clone()))
        .collect()
}
