use std::fmt::Write as _;

use super::{ApiOperation, SchemaNode};

pub const TRUNCATION_MARKER: &str = "\n[... truncated]";
const MIN_BUDGET: usize = 256;

/// Renders an operation as compact text for prompts. The output never
/// exceeds `budget` characters (at least 256); overlong renderings end with
/// [`TRUNCATION_MARKER`].
pub fn operation_summary(op: &ApiOperation, budget: usize) -> String {
    let budget = budget.max(MIN_BUDGET);
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", op.method, op.path_template);
    let _ = writeln!(out, "operationId: {}", op.id);
    if let Some(d) = &op.description {
        let _ = writeln!(out, "description: {}", d.trim());
    }
    if op.parameters.is_empty() {
        out.push_str("parameters: no parameters\n");
    } else {
        out.push_str("parameters:\n");
        for p in &op.parameters {
            let req = if p.required { " (required)" } else { "" };
            let _ = writeln!(out, "  - {} {}{}: {}", p.location, p.name, req, schema_line(&p.schema));
            render_members(&p.schema, 2, &mut out);
        }
    }
    match &op.request_body_schema {
        Some(body) => {
            let media = op.request_body_media_type.as_deref().unwrap_or("application/json");
            let req = if op.request_body_required { ", required" } else { "" };
            let _ = writeln!(out, "request body ({media}{req}): {}", schema_line(body));
            render_members(body, 1, &mut out);
        }
        None => out.push_str("request body: none\n"),
    }
    if !op.response_schemas.is_empty() {
        out.push_str("responses:\n");
        for (status, schema) in &op.response_schemas {
            let _ = writeln!(out, "  {status}: {}", schema_line(schema));
            render_members(schema, 2, &mut out);
        }
    }
    truncate(out, budget)
}

fn truncate(text: String, budget: usize) -> String {
    if text.chars().count() <= budget {
        return text;
    }
    let keep = budget - TRUNCATION_MARKER.chars().count();
    let mut out: String = text.chars().take(keep).collect();
    out.push_str(TRUNCATION_MARKER);
    out
}

/// One-line rendering of a schema's own constraints.
fn schema_line(node: &SchemaNode) -> String {
    if node.recursive {
        return "(recursive)".into();
    }
    let mut parts: Vec<String> = Vec::new();
    parts.push(node.kind.map_or("any".to_string(), |k| k.to_string()));
    if node.nullable {
        parts.push("nullable".into());
    }
    if let Some(f) = &node.format {
        parts.push(format!("format {f}"));
    }
    if let Some(values) = &node.enum_values {
        let list: Vec<String> = values.iter().map(|v| v.to_string()).collect();
        parts.push(format!("one of [{}]", list.join(", ")));
    }
    if let Some(min) = node.minimum {
        let op = if node.exclusive_minimum { ">" } else { ">=" };
        parts.push(format!("{op} {min}"));
    }
    if let Some(max) = node.maximum {
        let op = if node.exclusive_maximum { "<" } else { "<=" };
        parts.push(format!("{op} {max}"));
    }
    if let Some(n) = node.min_length {
        parts.push(format!("minLength {n}"));
    }
    if let Some(n) = node.max_length {
        parts.push(format!("maxLength {n}"));
    }
    if let Some(p) = &node.pattern {
        parts.push(format!("pattern {p}"));
    }
    if node.alternatives.len() > 1 {
        let alts: Vec<String> = node.alternatives.iter().map(schema_line).collect();
        parts.push(format!("alternatives: {}", alts.join(" | ")));
    }
    if let Some(d) = &node.description {
        parts.push(format!("-- {}", d.trim()));
    }
    parts.join(", ")
}

fn render_members(node: &SchemaNode, indent: usize, out: &mut String) {
    if node.recursive {
        return;
    }
    let pad = "  ".repeat(indent);
    for (name, child) in &node.properties {
        let req = if node.required_properties.contains(name) { " (required)" } else { "" };
        let _ = writeln!(out, "{pad}- {name}{req}: {}", schema_line(child));
        render_members(child, indent + 1, out);
    }
    if let Some(items) = &node.items {
        let _ = writeln!(out, "{pad}- items: {}", schema_line(items));
        render_members(items, indent + 1, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oas::{parse_spec, DocumentFormat};

    #[test]
    fn ping_mentions_method_path_and_no_parameters() {
        let spec = parse_spec(
            "openapi: 3.0.0\ninfo: {title: t, version: '1'}\npaths:\n  /ping:\n    get:\n      responses: {'200': {description: ok}}\n",
            DocumentFormat::Yaml,
        )
        .unwrap();
        let a = operation_summary(&spec.operations[0], 1000);
        assert!(a.contains("GET /ping"));
        assert!(a.contains("no parameters"));
        assert_eq!(a, operation_summary(&spec.operations[0], 1000));
    }

    #[test]
    fn deep_schema_is_truncated_within_budget() {
        let mut props = String::new();
        for i in 0..200 {
            props.push_str(&format!("                field_{i}: {{type: string, maxLength: {i}}}\n"));
        }
        let doc = format!(
            "openapi: 3.0.0\ninfo: {{title: t, version: '1'}}\npaths:\n  /big:\n    post:\n      requestBody:\n        content:\n          application/json:\n            schema:\n              type: object\n              properties:\n{props}      responses: {{}}\n"
        );
        let spec = parse_spec(&doc, DocumentFormat::Yaml).unwrap();
        let text = operation_summary(&spec.operations[0], 300);
        assert!(text.chars().count() <= 300);
        assert!(text.ends_with(TRUNCATION_MARKER));
    }
}
