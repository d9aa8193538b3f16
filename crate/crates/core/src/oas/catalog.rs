use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{ApiOperation, LocatorSegment, ParamLocator, SchemaKind, SchemaNode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConstraintKind {
    Type,
    Format,
    Enum,
    Range,
    Length,
    Pattern,
    Required,
}

impl ConstraintKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ConstraintKind::Type => "Type",
            ConstraintKind::Format => "Format",
            ConstraintKind::Enum => "Enum",
            ConstraintKind::Range => "Range",
            ConstraintKind::Length => "Length",
            ConstraintKind::Pattern => "Pattern",
            ConstraintKind::Required => "Required",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            ConstraintKind::Type,
            ConstraintKind::Format,
            ConstraintKind::Enum,
            ConstraintKind::Range,
            ConstraintKind::Length,
            ConstraintKind::Pattern,
            ConstraintKind::Required,
        ]
        .into_iter()
        .find(|k| k.as_str().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Constraint {
    Type {
        expected: SchemaKind,
    },
    Format {
        format: String,
    },
    Enum {
        values: Vec<Value>,
    },
    Range {
        #[serde(skip_serializing_if = "Option::is_none")]
        minimum: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        maximum: Option<f64>,
        #[serde(default)]
        exclusive_minimum: bool,
        #[serde(default)]
        exclusive_maximum: bool,
    },
    Length {
        #[serde(skip_serializing_if = "Option::is_none")]
        min: Option<u64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        max: Option<u64>,
    },
    Pattern {
        pattern: String,
    },
    Required,
}

impl Constraint {
    pub fn kind(&self) -> ConstraintKind {
        match self {
            Constraint::Type { .. } => ConstraintKind::Type,
            Constraint::Format { .. } => ConstraintKind::Format,
            Constraint::Enum { .. } => ConstraintKind::Enum,
            Constraint::Range { .. } => ConstraintKind::Range,
            Constraint::Length { .. } => ConstraintKind::Length,
            Constraint::Pattern { .. } => ConstraintKind::Pattern,
            Constraint::Required => ConstraintKind::Required,
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constraint::Type { expected } => write!(f, "Type {expected}"),
            Constraint::Format { format } => write!(f, "Format {format}"),
            Constraint::Enum { values } => {
                let list: Vec<String> = values.iter().map(Value::to_string).collect();
                write!(f, "Enum [{}]", list.join(", "))
            }
            Constraint::Range {
                minimum,
                maximum,
                exclusive_minimum,
                exclusive_maximum,
            } => {
                let lo = minimum.map_or("-inf".to_string(), |v| v.to_string());
                let hi = maximum.map_or("+inf".to_string(), |v| v.to_string());
                let open = if *exclusive_minimum { '(' } else { '[' };
                let close = if *exclusive_maximum { ')' } else { ']' };
                write!(f, "Range {open}{lo}, {hi}{close}")
            }
            Constraint::Length { min, max } => write!(
                f,
                "Length [{}, {}]",
                min.unwrap_or(0),
                max.map_or("inf".to_string(), |v| v.to_string())
            ),
            Constraint::Pattern { pattern } => write!(f, "Pattern {pattern}"),
            Constraint::Required => f.write_str("Required"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintEntry {
    pub locator: ParamLocator,
    pub constraint: Constraint,
}

impl ConstraintEntry {
    pub fn kind(&self) -> ConstraintKind {
        self.constraint.kind()
    }
}

impl fmt::Display for ConstraintEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.locator, self.constraint)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCatalog {
    pub operation_id: String,
    pub entries: Vec<ConstraintEntry>,
}

impl ConstraintCatalog {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn find(&self, locator: &ParamLocator, kind: ConstraintKind) -> Option<&ConstraintEntry> {
        self.entries
            .iter()
            .find(|e| &e.locator == locator && e.kind() == kind)
    }

    pub fn for_locator<'a>(&'a self, locator: &'a ParamLocator) -> impl Iterator<Item = &'a ConstraintEntry> + 'a {
        self.entries.iter().filter(move |e| &e.locator == locator)
    }
}

/// Lists every declared constraint of an operation's parameters and body.
pub fn constraint_catalog(op: &ApiOperation) -> ConstraintCatalog {
    let mut entries = Vec::new();
    for param in &op.parameters {
        let locator = ParamLocator::parameter(param.location, &param.name);
        collect(&param.schema, &locator, param.required, &mut entries);
    }
    if let Some(body) = &op.request_body_schema {
        collect(body, &ParamLocator::body(), op.request_body_required, &mut entries);
    }
    ConstraintCatalog {
        operation_id: op.id.clone(),
        entries,
    }
}

fn push(entries: &mut Vec<ConstraintEntry>, locator: &ParamLocator, constraint: Constraint) {
    let entry = ConstraintEntry {
        locator: locator.clone(),
        constraint,
    };
    if !entries.contains(&entry) {
        entries.push(entry);
    }
}

fn collect(node: &SchemaNode, locator: &ParamLocator, required: bool, entries: &mut Vec<ConstraintEntry>) {
    collect_own(node, locator, entries);
    for alt in node.alternatives.iter() {
        collect_own(alt, locator, entries);
    }
    if required {
        push(entries, locator, Constraint::Required);
    }
    if node.recursive {
        return;
    }
    for (name, child) in &node.properties {
        let child_locator = locator.child(LocatorSegment::Field(name.clone()));
        let child_required = node.required_properties.iter().any(|r| r == name);
        collect(child, &child_locator, child_required, entries);
    }
    if let Some(items) = &node.items {
        collect(items, &locator.child(LocatorSegment::Items), false, entries);
    }
}

fn collect_own(node: &SchemaNode, locator: &ParamLocator, entries: &mut Vec<ConstraintEntry>) {
    if let Some(kind) = node.kind {
        push(entries, locator, Constraint::Type { expected: kind });
    }
    if let Some(format) = &node.format {
        push(entries, locator, Constraint::Format { format: format.clone() });
    }
    if let Some(values) = &node.enum_values {
        push(entries, locator, Constraint::Enum { values: values.clone() });
    }
    if node.minimum.is_some() || node.maximum.is_some() {
        push(
            entries,
            locator,
            Constraint::Range {
                minimum: node.minimum,
                maximum: node.maximum,
                exclusive_minimum: node.exclusive_minimum,
                exclusive_maximum: node.exclusive_maximum,
            },
        );
    }
    if node.min_length.is_some() || node.max_length.is_some() {
        push(
            entries,
            locator,
            Constraint::Length {
                min: node.min_length,
                max: node.max_length,
            },
        );
    }
    if let Some(pattern) = &node.pattern {
        push(entries, locator, Constraint::Pattern { pattern: pattern.clone() });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oas::{parse_spec, DocumentFormat, ParamLocation};

    fn op_from(yaml_op: &str, path: &str) -> ApiOperation {
        let doc = format!(
            "openapi: 3.0.0\ninfo: {{title: t, version: '1'}}\npaths:\n  {path}:\n{yaml_op}"
        );
        parse_spec(&doc, DocumentFormat::Yaml).unwrap().operations.remove(0)
    }

    #[test]
    fn required_string_parameter_yields_type_then_required() {
        let op = op_from(
            "    get:\n      parameters:\n        - {name: room_type_id, in: query, required: true, schema: {type: string}}\n      responses: {}\n",
            "/rooms",
        );
        let cat = constraint_catalog(&op);
        let loc = ParamLocator::parameter(ParamLocation::Query, "room_type_id");
        assert_eq!(
            cat.entries,
            vec![
                ConstraintEntry { locator: loc.clone(), constraint: Constraint::Type { expected: SchemaKind::String } },
                ConstraintEntry { locator: loc, constraint: Constraint::Required },
            ]
        );
    }

    #[test]
    fn unconstrained_operation_has_empty_catalog() {
        let op = op_from("    get:\n      responses: {}\n", "/ping");
        assert!(constraint_catalog(&op).is_empty());
    }

    #[test]
    fn body_range_is_transcribed() {
        let op = op_from(
            "    post:\n      requestBody:\n        content:\n          application/json:\n            schema:\n              type: object\n              properties:\n                count: {type: integer, minimum: 1, maximum: 10}\n      responses: {}\n",
            "/c",
        );
        let cat = constraint_catalog(&op);
        let loc: ParamLocator = "body.count".parse().unwrap();
        let range = cat.find(&loc, ConstraintKind::Range).unwrap();
        assert_eq!(
            range.constraint,
            Constraint::Range { minimum: Some(1.0), maximum: Some(10.0), exclusive_minimum: false, exclusive_maximum: false }
        );
        // Every locator resolves back to a schema.
        for e in &cat.entries {
            assert!(op.schema_at(&e.locator).is_some(), "{}", e.locator);
        }
    }

    #[test]
    fn required_body_properties_and_array_items() {
        let op = op_from(
            "    post:\n      requestBody:\n        required: true\n        content:\n          application/json:\n            schema:\n              type: object\n              required: [tags]\n              properties:\n                tags: {type: array, items: {type: string, maxLength: 4}}\n      responses: {}\n",
            "/t",
        );
        let cat = constraint_catalog(&op);
        assert!(cat.find(&ParamLocator::body(), ConstraintKind::Required).is_some());
        assert!(cat.find(&"body.tags".parse().unwrap(), ConstraintKind::Required).is_some());
        assert!(cat.find(&"body.tags[]".parse().unwrap(), ConstraintKind::Length).is_some());
    }

    #[test]
    fn alternatives_all_appear() {
        let op = op_from(
            "    get:\n      parameters:\n        - name: v\n          in: query\n          schema:\n            oneOf: [{type: string}, {type: integer}]\n      responses: {}\n",
            "/v",
        );
        let cat = constraint_catalog(&op);
        let types: Vec<_> = cat.entries.iter().filter(|e| e.kind() == ConstraintKind::Type).collect();
        assert_eq!(types.len(), 2);
    }
}
