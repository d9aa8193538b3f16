//! Resolved in-memory model of an OpenAPI 3.x document.

mod catalog;
mod parse;
mod summary;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use catalog::{constraint_catalog, Constraint, ConstraintCatalog, ConstraintEntry, ConstraintKind};
pub use parse::{load_document, parse_spec, resolve_document, DocumentFormat, MAX_REF_EXPANSION};
pub use summary::{operation_summary, TRUNCATION_MARKER};

#[derive(Debug, Error)]
pub enum OasError {
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error("unsupported OpenAPI version: {0}")]
    UnsupportedVersion(String),
    #[error("unresolvable reference '{0}'")]
    UnresolvableRef(String),
    #[error("external reference not supported: '{0}'")]
    ExternalRefNotSupported(String),
    #[error("cannot load document from {source_name}: {reason}")]
    Load { source_name: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum HttpMethod {
    Get,
    Post,
    Put,
    Patch,
    Delete,
    Head,
    Options,
}

impl HttpMethod {
    pub const ALL: [HttpMethod; 7] = [
        HttpMethod::Get,
        HttpMethod::Post,
        HttpMethod::Put,
        HttpMethod::Patch,
        HttpMethod::Delete,
        HttpMethod::Head,
        HttpMethod::Options,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            HttpMethod::Get => "GET",
            HttpMethod::Post => "POST",
            HttpMethod::Put => "PUT",
            HttpMethod::Patch => "PATCH",
            HttpMethod::Delete => "DELETE",
            HttpMethod::Head => "HEAD",
            HttpMethod::Options => "OPTIONS",
        }
    }
}

impl fmt::Display for HttpMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HttpMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        HttpMethod::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown HTTP method '{s}'"))
    }
}

/// Where a parameter travels in a request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamLocation {
    Body,
    Path,
    Query,
    Header,
    Cookie,
}

impl ParamLocation {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamLocation::Body => "body",
            ParamLocation::Path => "path",
            ParamLocation::Query => "query",
            ParamLocation::Header => "header",
            ParamLocation::Cookie => "cookie",
        }
    }
}

impl fmt::Display for ParamLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ParamLocation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "body" => Ok(ParamLocation::Body),
            "path" => Ok(ParamLocation::Path),
            "query" => Ok(ParamLocation::Query),
            "header" => Ok(ParamLocation::Header),
            "cookie" => Ok(ParamLocation::Cookie),
            other => Err(format!("unknown parameter location '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemaKind {
    String,
    Number,
    Integer,
    Boolean,
    Array,
    Object,
    Null,
}

impl SchemaKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SchemaKind::String => "string",
            SchemaKind::Number => "number",
            SchemaKind::Integer => "integer",
            SchemaKind::Boolean => "boolean",
            SchemaKind::Array => "array",
            SchemaKind::Object => "object",
            SchemaKind::Null => "null",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "string" => SchemaKind::String,
            "number" => SchemaKind::Number,
            "integer" => SchemaKind::Integer,
            "boolean" => SchemaKind::Boolean,
            "array" => SchemaKind::Array,
            "object" => SchemaKind::Object,
            "null" => SchemaKind::Null,
            _ => return None,
        })
    }

    /// Whether a JSON value has this type. Integers are numbers; integral
    /// floats such as `3.0` count as integers.
    pub fn admits(self, value: &Value) -> bool {
        match self {
            SchemaKind::String => value.is_string(),
            SchemaKind::Number => value.is_number(),
            SchemaKind::Integer => match value {
                Value::Number(n) => n.is_i64() || n.is_u64() || n.as_f64().is_some_and(|f| f.fract() == 0.0),
                _ => false,
            },
            SchemaKind::Boolean => value.is_boolean(),
            SchemaKind::Array => value.is_array(),
            SchemaKind::Object => value.is_object(),
            SchemaKind::Null => value.is_null(),
        }
    }
}

impl fmt::Display for SchemaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A schema with references inlined. `kind == None` means unconstrained.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemaNode {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<SchemaKind>,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub nullable: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub enum_values: Option<Vec<Value>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub minimum: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub maximum: Option<f64>,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub exclusive_minimum: bool,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub exclusive_maximum: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_length: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_length: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub required_properties: Vec<String>,
    #[serde(skip_serializing_if = "IndexMap::is_empty")]
    pub properties: IndexMap<String, SchemaNode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub items: Option<Box<SchemaNode>>,
    /// `oneOf`/`anyOf` branches. The node's own fields mirror the first.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub alternatives: Vec<SchemaNode>,
    /// Set where a cyclic reference was cut off.
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub recursive: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    /// `x-*` vendor fields, kept verbatim and never interpreted.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub extensions: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpec {
    pub name: String,
    pub location: ParamLocation,
    pub required: bool,
    pub schema: SchemaNode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiOperation {
    pub id: String,
    pub method: HttpMethod,
    pub path_template: String,
    /// Path, query, header and cookie parameters. The body is described by
    /// `request_body_schema`.
    pub parameters: Vec<ParameterSpec>,
    pub request_body_schema: Option<SchemaNode>,
    pub request_body_required: bool,
    pub request_body_media_type: Option<String>,
    pub response_schemas: BTreeMap<String, SchemaNode>,
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extensions: BTreeMap<String, Value>,
}

impl ApiOperation {
    /// `"METHOD /path"`, used for synthesized ids and report signatures.
    pub fn signature(&self) -> String {
        format!("{} {}", self.method, self.path_template)
    }

    pub fn parameter(&self, location: ParamLocation, name: &str) -> Option<&ParameterSpec> {
        self.parameters.iter().find(|p| {
            p.location == location
                && if location == ParamLocation::Header {
                    p.name.eq_ignore_ascii_case(name)
                } else {
                    p.name == name
                }
        })
    }

    /// Names of the `{placeholder}`s in the path template, in order.
    pub fn path_placeholders(&self) -> Vec<&str> {
        path_placeholders(&self.path_template)
    }

    pub fn has_json_body(&self) -> bool {
        self.request_body_media_type
            .as_deref()
            .is_none_or(is_json_media_type)
    }

    /// Resolves a locator back to the schema it constrains.
    pub fn schema_at(&self, locator: &ParamLocator) -> Option<&SchemaNode> {
        let (root, rest) = match locator.location {
            ParamLocation::Body => (self.request_body_schema.as_ref()?, &locator.path[..]),
            loc => {
                let (first, rest) = locator.path.split_first()?;
                let LocatorSegment::Field(name) = first else {
                    return None;
                };
                (&self.parameter(loc, name)?.schema, rest)
            }
        };
        rest.iter().try_fold(root, |node, seg| match seg {
            LocatorSegment::Field(name) => node.properties.get(name),
            LocatorSegment::Items => node.items.as_deref(),
        })
    }
}

pub(crate) fn is_json_media_type(media: &str) -> bool {
    let essence = media.split(';').next().unwrap_or("").trim().to_ascii_lowercase();
    essence == "application/json" || essence.ends_with("+json") || essence == "*/*"
}

pub(crate) fn path_placeholders(template: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        let Some(len) = rest[start..].find('}') else { break };
        out.push(&rest[start + 1..start + len]);
        rest = &rest[start + len + 1..];
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiSpec {
    pub title: String,
    pub version: String,
    pub servers: Vec<String>,
    pub operations: Vec<ApiOperation>,
}

impl ApiSpec {
    pub fn operation(&self, id: &str) -> Option<&ApiOperation> {
        self.operations.iter().find(|o| o.id == id)
    }
}

/// One step of a locator: an object field or "any element" of an array.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LocatorSegment {
    Field(String),
    Items,
}

/// Names a parameter or body property, e.g. `query.room_type_id`,
/// `body.count` or `body.rooms[].id`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamLocator {
    pub location: ParamLocation,
    pub path: Vec<LocatorSegment>,
}

impl ParamLocator {
    pub fn parameter(location: ParamLocation, name: &str) -> Self {
        Self {
            location,
            path: vec![LocatorSegment::Field(name.to_string())],
        }
    }

    pub fn body() -> Self {
        Self {
            location: ParamLocation::Body,
            path: Vec::new(),
        }
    }

    pub fn child(&self, seg: LocatorSegment) -> Self {
        let mut path = self.path.clone();
        path.push(seg);
        Self {
            location: self.location,
            path,
        }
    }
}

impl fmt::Display for ParamLocator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.location.as_str())?;
        for seg in &self.path {
            match seg {
                LocatorSegment::Field(name) => write!(f, ".{name}")?,
                LocatorSegment::Items => f.write_str("[]")?,
            }
        }
        Ok(())
    }
}

impl FromStr for ParamLocator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (loc, rest) = match s.find(['.', '[']) {
            Some(i) => (&s[..i], &s[i..]),
            None => (s, ""),
        };
        let location: ParamLocation = loc.parse()?;
        let mut path = Vec::new();
        let mut rest = rest;
        while !rest.is_empty() {
            if let Some(r) = rest.strip_prefix("[]") {
                path.push(LocatorSegment::Items);
                rest = r;
            } else if let Some(r) = rest.strip_prefix('.') {
                let end = r.find(['.', '[']).unwrap_or(r.len());
                if end == 0 {
                    return Err(format!("empty field in locator '{s}'"));
                }
                path.push(LocatorSegment::Field(r[..end].to_string()));
                rest = &r[end..];
            } else {
                return Err(format!("malformed locator '{s}'"));
            }
        }
        Ok(Self { location, path })
    }
}

impl Serialize for ParamLocator {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ParamLocator {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn locator_display_and_parse_agree() {
        for text in ["query.room_type_id", "body", "body.count", "body.rooms[].id", "body[]"] {
            let loc: ParamLocator = text.parse().unwrap();
            assert_eq!(loc.to_string(), text);
        }
        assert!("nowhere.x".parse::<ParamLocator>().is_err());
        assert!("body..x".parse::<ParamLocator>().is_err());
    }

    #[test]
    fn placeholders_in_order() {
        assert_eq!(path_placeholders("/a/{x}/b/{y}"), vec!["x", "y"]);
        assert!(path_placeholders("/ping").is_empty());
    }

    #[test]
    fn integer_kind_admits_integral_floats_only() {
        assert!(SchemaKind::Integer.admits(&serde_json::json!(3)));
        assert!(SchemaKind::Integer.admits(&serde_json::json!(3.0)));
        assert!(!SchemaKind::Integer.admits(&serde_json::json!(3.5)));
        assert!(!SchemaKind::Integer.admits(&serde_json::json!("3")));
        assert!(SchemaKind::Number.admits(&serde_json::json!(3)));
    }

    #[test]
    fn json_media_types() {
        assert!(is_json_media_type("application/json"));
        assert!(is_json_media_type("application/problem+json; charset=utf-8"));
        assert!(!is_json_media_type("multipart/form-data"));
    }
}
