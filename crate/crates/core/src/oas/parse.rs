use std::collections::{BTreeMap, HashSet};

use indexmap::IndexMap;
use serde_json::{Map, Value};

use super::{
    path_placeholders, ApiOperation, ApiSpec, HttpMethod, OasError, ParamLocation, ParameterSpec,
    SchemaKind, SchemaNode,
};

/// How many times a reference may be nested inside its own expansion before
/// it is replaced by a `recursive` marker node.
pub const MAX_REF_EXPANSION: usize = 3;

const RECURSIVE_MARKER: &str = "x-happypath-recursive";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DocumentFormat {
    Json,
    Yaml,
    #[default]
    Auto,
}

/// Reads a document from a local path or an `http(s)://` URL.
pub fn load_document(source: &str) -> Result<String, OasError> {
    let load_err = |reason: String| OasError::Load {
        source_name: source.to_string(),
        reason,
    };
    if source.starts_with("http://") || source.starts_with("https://") {
        let resp = reqwest::blocking::get(source).map_err(|e| load_err(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(load_err(format!("HTTP status {}", resp.status())));
        }
        resp.text().map_err(|e| load_err(e.to_string()))
    } else {
        std::fs::read_to_string(source).map_err(|e| load_err(e.to_string()))
    }
}

fn decode(document: &str, format: DocumentFormat) -> Result<Value, OasError> {
    let trimmed = document.trim_start();
    if trimmed.is_empty() {
        return Err(OasError::MalformedDocument("document is empty".into()));
    }
    let format = match format {
        DocumentFormat::Auto if trimmed.starts_with('{') => DocumentFormat::Json,
        DocumentFormat::Auto => DocumentFormat::Yaml,
        f => f,
    };
    let value: Value = match format {
        DocumentFormat::Json => serde_json::from_str(document)
            .map_err(|e| OasError::MalformedDocument(format!("invalid JSON: {e}")))?,
        _ => serde_yaml::from_str(document)
            .map_err(|e| OasError::MalformedDocument(format!("invalid YAML: {e}")))?,
    };
    if !value.is_object() {
        return Err(OasError::MalformedDocument("document root must be an object".into()));
    }
    Ok(value)
}

fn check_version(root: &Value) -> Result<(), OasError> {
    if let Some(v) = root.get("swagger") {
        return Err(OasError::UnsupportedVersion(format!(
            "Swagger {} documents are not supported; convert to OpenAPI 3.x",
            scalar_text(v)
        )));
    }
    match root.get("openapi") {
        Some(v) if scalar_text(v).starts_with("3.") => Ok(()),
        Some(v) => Err(OasError::UnsupportedVersion(format!(
            "openapi {} (only 3.x is supported)",
            scalar_text(v)
        ))),
        None => Err(OasError::UnsupportedVersion(
            "missing 'openapi' version field".into(),
        )),
    }
}

fn scalar_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Parses and resolves an OpenAPI 3.0/3.1 document.
pub fn parse_spec(document: &str, format: DocumentFormat) -> Result<ApiSpec, OasError> {
    let root = decode(document, format)?;
    check_version(&root)?;
    let resolved = resolve_document(&root)?;
    build_spec(&resolved)
}

/// Inlines every internal `$ref` reachable from `paths`. Components are left
/// as they are. Applying this twice gives the same document as applying it
/// once.
pub fn resolve_document(root: &Value) -> Result<Value, OasError> {
    let mut out = root.clone();
    if let Some(paths) = root.get("paths") {
        let mut resolver = Resolver {
            root,
            stack: Vec::new(),
        };
        let resolved = resolver.resolve(paths)?;
        out["paths"] = resolved;
    }
    Ok(out)
}

struct Resolver<'a> {
    root: &'a Value,
    stack: Vec<String>,
}

impl Resolver<'_> {
    fn resolve(&mut self, value: &Value) -> Result<Value, OasError> {
        match value {
            Value::Object(map) => {
                if let Some(Value::String(reference)) = map.get("$ref") {
                    return self.follow(reference, map);
                }
                let mut out = Map::with_capacity(map.len());
                for (k, v) in map {
                    // Vendor extensions are carried as-is.
                    let v = if k.starts_with("x-") { v.clone() } else { self.resolve(v)? };
                    out.insert(k.clone(), v);
                }
                Ok(Value::Object(out))
            }
            Value::Array(items) => items
                .iter()
                .map(|v| self.resolve(v))
                .collect::<Result<Vec<_>, _>>()
                .map(Value::Array),
            other => Ok(other.clone()),
        }
    }

    fn follow(&mut self, reference: &str, siblings: &Map<String, Value>) -> Result<Value, OasError> {
        let Some(pointer) = reference.strip_prefix('#') else {
            return Err(OasError::ExternalRefNotSupported(reference.to_string()));
        };
        let depth = self.stack.iter().filter(|r| *r == reference).count();
        if depth >= MAX_REF_EXPANSION {
            let mut marker = Map::new();
            marker.insert(RECURSIVE_MARKER.into(), Value::String(reference.to_string()));
            return Ok(Value::Object(marker));
        }
        let target = self
            .root
            .pointer(&decode_pointer(pointer))
            .ok_or_else(|| OasError::UnresolvableRef(reference.to_string()))?;
        self.stack.push(reference.to_string());
        let resolved = self.resolve(target);
        self.stack.pop();
        let mut resolved = resolved?;
        // 3.1 allows annotations next to $ref; they override the target's.
        if let Value::Object(obj) = &mut resolved {
            for (k, v) in siblings {
                if k != "$ref" {
                    obj.insert(k.clone(), self.resolve(v)?);
                }
            }
        }
        Ok(resolved)
    }
}

/// Percent-decodes a URI fragment so it can be used as a JSON pointer.
fn decode_pointer(fragment: &str) -> String {
    percent_encoding::percent_decode_str(fragment)
        .decode_utf8_lossy()
        .into_owned()
}

fn build_spec(root: &Value) -> Result<ApiSpec, OasError> {
    let info = root.get("info");
    let title = info
        .and_then(|i| i.get("title"))
        .map(scalar_text)
        .unwrap_or_default();
    let version = info
        .and_then(|i| i.get("version"))
        .map(scalar_text)
        .unwrap_or_default();
    let servers = root
        .get("servers")
        .and_then(Value::as_array)
        .map(|list| list.iter().filter_map(server_url).collect())
        .unwrap_or_default();

    let mut operations = Vec::new();
    let mut seen_ids: HashSet<String> = HashSet::new();
    if let Some(paths) = root.get("paths") {
        let paths = paths
            .as_object()
            .ok_or_else(|| OasError::MalformedDocument("'paths' must be an object".into()))?;
        for (path, item) in paths {
            if path.starts_with("x-") {
                continue;
            }
            let item = item.as_object().ok_or_else(|| {
                OasError::MalformedDocument(format!("path item '{path}' must be an object"))
            })?;
            let shared_params = match item.get("parameters") {
                Some(p) => parse_parameters(p, path)?,
                None => Vec::new(),
            };
            for method in HttpMethod::ALL {
                let key = method.as_str().to_ascii_lowercase();
                let Some(op) = item.get(&key) else { continue };
                let mut operation = parse_operation(method, path, op, &shared_params)?;
                operation.id = unique_id(&operation.id, &mut seen_ids);
                operations.push(operation);
            }
        }
    }
    Ok(ApiSpec {
        title,
        version,
        servers,
        operations,
    })
}

fn server_url(server: &Value) -> Option<String> {
    let mut url = server.get("url")?.as_str()?.to_string();
    if let Some(vars) = server.get("variables").and_then(Value::as_object) {
        for (name, var) in vars {
            if let Some(default) = var.get("default") {
                url = url.replace(&format!("{{{name}}}"), &scalar_text(default));
            }
        }
    }
    Some(url)
}

fn unique_id(base: &str, seen: &mut HashSet<String>) -> String {
    if seen.insert(base.to_string()) {
        return base.to_string();
    }
    let mut n = 2;
    loop {
        let candidate = format!("{base}_{n}");
        if seen.insert(candidate.clone()) {
            return candidate;
        }
        n += 1;
    }
}

fn parse_parameters(value: &Value, path: &str) -> Result<Vec<ParameterSpec>, OasError> {
    let list = value.as_array().ok_or_else(|| {
        OasError::MalformedDocument(format!("parameters of '{path}' must be a list"))
    })?;
    list.iter().map(|p| parse_parameter(p, path)).collect()
}

fn parse_parameter(value: &Value, path: &str) -> Result<ParameterSpec, OasError> {
    let malformed = |what: &str| OasError::MalformedDocument(format!("parameter in '{path}': {what}"));
    let name = value
        .get("name")
        .and_then(Value::as_str)
        .ok_or_else(|| malformed("missing name"))?
        .to_string();
    let location = match value.get("in").and_then(Value::as_str) {
        Some("path") => ParamLocation::Path,
        Some("query") => ParamLocation::Query,
        Some("header") => ParamLocation::Header,
        Some("cookie") => ParamLocation::Cookie,
        Some(other) => return Err(malformed(&format!("unsupported location '{other}' for '{name}'"))),
        None => return Err(malformed(&format!("missing 'in' for '{name}'"))),
    };
    // Path parameters are always required.
    let required = location == ParamLocation::Path
        || value.get("required").and_then(Value::as_bool).unwrap_or(false);
    let schema = match (value.get("schema"), value.get("content")) {
        (Some(s), _) => convert_schema(s)?,
        (None, Some(content)) => first_media_schema(content)?.unwrap_or_default(),
        (None, None) => SchemaNode::default(),
    };
    Ok(ParameterSpec {
        name,
        location,
        required,
        schema,
    })
}

fn first_media_schema(content: &Value) -> Result<Option<SchemaNode>, OasError> {
    Ok(match pick_media(content) {
        Some((_, media)) => match media.get("schema") {
            Some(s) => Some(convert_schema(s)?),
            None => Some(SchemaNode::default()),
        },
        None => None,
    })
}

/// Picks the JSON media type if one exists, otherwise the first declared.
fn pick_media(content: &Value) -> Option<(&String, &Value)> {
    let map = content.as_object()?;
    map.iter()
        .find(|(k, _)| super::is_json_media_type(k) && k.as_str() != "*/*")
        .or_else(|| map.iter().next())
}

fn parse_operation(
    method: HttpMethod,
    path: &str,
    op: &Value,
    shared_params: &[ParameterSpec],
) -> Result<ApiOperation, OasError> {
    let op = op
        .as_object()
        .ok_or_else(|| OasError::MalformedDocument(format!("{method} {path} must be an object")))?;

    let mut parameters: Vec<ParameterSpec> = shared_params.to_vec();
    if let Some(own) = op.get("parameters") {
        for p in parse_parameters(own, path)? {
            match parameters
                .iter_mut()
                .find(|q| q.name == p.name && q.location == p.location)
            {
                Some(existing) => *existing = p,
                None => parameters.push(p),
            }
        }
    }

    for placeholder in path_placeholders(path) {
        let matches = parameters
            .iter()
            .filter(|p| p.location == ParamLocation::Path && p.name == placeholder)
            .count();
        if matches != 1 {
            return Err(OasError::MalformedDocument(format!(
                "{method} {path}: placeholder '{{{placeholder}}}' has no matching path parameter"
            )));
        }
    }

    let (request_body_schema, request_body_required, request_body_media_type) =
        match op.get("requestBody") {
            Some(body) => {
                let required = body.get("required").and_then(Value::as_bool).unwrap_or(false);
                match body.get("content").and_then(pick_media) {
                    Some((media_type, media)) => {
                        let schema = match media.get("schema") {
                            Some(s) => convert_schema(s)?,
                            None => SchemaNode::default(),
                        };
                        (Some(schema), required, Some(media_type.clone()))
                    }
                    None => (None, false, None),
                }
            }
            None => (None, false, None),
        };

    let mut response_schemas = BTreeMap::new();
    if let Some(responses) = op.get("responses").and_then(Value::as_object) {
        for (status, response) in responses {
            if status.starts_with("x-") {
                continue;
            }
            let schema = match response.get("content") {
                Some(content) => first_media_schema(content)?.unwrap_or_default(),
                None => SchemaNode::default(),
            };
            response_schemas.insert(status.clone(), schema);
        }
    }

    let description = op
        .get("summary")
        .or_else(|| op.get("description"))
        .and_then(Value::as_str)
        .map(str::to_string);
    let id = op
        .get("operationId")
        .and_then(Value::as_str)
        .map(str::to_string)
        .unwrap_or_else(|| format!("{method} {path}"));

    Ok(ApiOperation {
        id,
        method,
        path_template: path.to_string(),
        parameters,
        request_body_schema,
        request_body_required,
        request_body_media_type,
        response_schemas,
        description,
        extensions: extensions_of(op),
    })
}

fn extensions_of(map: &Map<String, Value>) -> BTreeMap<String, Value> {
    map.iter()
        .filter(|(k, _)| k.starts_with("x-") && k.as_str() != RECURSIVE_MARKER)
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect()
}

fn as_f64(v: Option<&Value>) -> Option<f64> {
    v.and_then(Value::as_f64)
}

fn as_u64(v: Option<&Value>) -> Option<u64> {
    v.and_then(Value::as_u64)
}

/// Converts a resolved JSON schema object into a [`SchemaNode`].
pub(crate) fn convert_schema(value: &Value) -> Result<SchemaNode, OasError> {
    let Some(map) = value.as_object() else {
        // `true`/`false` schemas (3.1) carry no constraints we use.
        return Ok(SchemaNode::default());
    };
    if map.contains_key(RECURSIVE_MARKER) {
        return Ok(SchemaNode {
            recursive: true,
            ..SchemaNode::default()
        });
    }

    let mut node = SchemaNode::default();
    match map.get("type") {
        Some(Value::String(t)) => node.kind = SchemaKind::parse(t),
        Some(Value::Array(types)) => {
            for t in types.iter().filter_map(Value::as_str) {
                match SchemaKind::parse(t) {
                    Some(SchemaKind::Null) => node.nullable = true,
                    Some(k) if node.kind.is_none() => node.kind = Some(k),
                    _ => {}
                }
            }
            if node.kind.is_none() && node.nullable {
                node.kind = Some(SchemaKind::Null);
            }
        }
        _ => {}
    }
    node.nullable |= map.get("nullable").and_then(Value::as_bool).unwrap_or(false);
    node.format = map.get("format").and_then(Value::as_str).map(str::to_string);
    node.enum_values = match (map.get("enum"), map.get("const")) {
        (Some(Value::Array(values)), _) => Some(values.clone()),
        (None, Some(c)) => Some(vec![c.clone()]),
        _ => None,
    };
    node.minimum = as_f64(map.get("minimum"));
    node.maximum = as_f64(map.get("maximum"));
    match map.get("exclusiveMinimum") {
        Some(Value::Bool(b)) => node.exclusive_minimum = *b,
        Some(v @ Value::Number(_)) => {
            node.minimum = v.as_f64();
            node.exclusive_minimum = true;
        }
        _ => {}
    }
    match map.get("exclusiveMaximum") {
        Some(Value::Bool(b)) => node.exclusive_maximum = *b,
        Some(v @ Value::Number(_)) => {
            node.maximum = v.as_f64();
            node.exclusive_maximum = true;
        }
        _ => {}
    }
    node.min_length = as_u64(map.get("minLength"));
    node.max_length = as_u64(map.get("maxLength"));
    node.pattern = map.get("pattern").and_then(Value::as_str).map(str::to_string);
    node.description = map.get("description").and_then(Value::as_str).map(str::to_string);
    node.extensions = extensions_of(map);

    if let Some(props) = map.get("properties").and_then(Value::as_object) {
        let mut converted = IndexMap::with_capacity(props.len());
        for (name, schema) in props {
            converted.insert(name.clone(), convert_schema(schema)?);
        }
        node.properties = converted;
    }
    if let Some(required) = map.get("required").and_then(Value::as_array) {
        node.required_properties = required
            .iter()
            .filter_map(Value::as_str)
            .map(str::to_string)
            .collect();
    }
    if let Some(items) = map.get("items") {
        node.items = Some(Box::new(convert_schema(items)?));
    }

    if let Some(parts) = map.get("allOf").and_then(Value::as_array) {
        for part in parts {
            let part = convert_schema(part)?;
            merge_into(&mut node, part);
        }
    }
    let alternatives = map
        .get("oneOf")
        .or_else(|| map.get("anyOf"))
        .and_then(Value::as_array);
    if let Some(alts) = alternatives {
        node.alternatives = alts.iter().map(convert_schema).collect::<Result<_, _>>()?;
        if let Some(first) = node.alternatives.first().cloned() {
            let mut first = first;
            first.alternatives.clear();
            merge_into(&mut node, first);
        }
    }

    if node.kind.is_none() {
        if !node.properties.is_empty() {
            node.kind = Some(SchemaKind::Object);
        } else if node.items.is_some() {
            node.kind = Some(SchemaKind::Array);
        }
    }
    check_bounds(&node)?;
    Ok(node)
}

/// Fills unset fields of `node` from `other` and unions object members.
fn merge_into(node: &mut SchemaNode, other: SchemaNode) {
    node.kind = node.kind.or(other.kind);
    node.nullable |= other.nullable;
    node.format = node.format.take().or(other.format);
    node.enum_values = node.enum_values.take().or(other.enum_values);
    if node.minimum.is_none() {
        node.minimum = other.minimum;
        node.exclusive_minimum = other.exclusive_minimum;
    }
    if node.maximum.is_none() {
        node.maximum = other.maximum;
        node.exclusive_maximum = other.exclusive_maximum;
    }
    node.min_length = node.min_length.or(other.min_length);
    node.max_length = node.max_length.or(other.max_length);
    node.pattern = node.pattern.take().or(other.pattern);
    for (name, schema) in other.properties {
        node.properties.entry(name).or_insert(schema);
    }
    for name in other.required_properties {
        if !node.required_properties.contains(&name) {
            node.required_properties.push(name);
        }
    }
    if node.items.is_none() {
        node.items = other.items;
    }
    node.recursive |= other.recursive;
    node.description = node.description.take().or(other.description);
    for (k, v) in other.extensions {
        node.extensions.entry(k).or_insert(v);
    }
}

fn check_bounds(node: &SchemaNode) -> Result<(), OasError> {
    if let (Some(lo), Some(hi)) = (node.minimum, node.maximum) {
        if lo > hi {
            return Err(OasError::MalformedDocument(format!(
                "minimum {lo} exceeds maximum {hi}"
            )));
        }
    }
    if let (Some(lo), Some(hi)) = (node.min_length, node.max_length) {
        if lo > hi {
            return Err(OasError::MalformedDocument(format!(
                "minLength {lo} exceeds maxLength {hi}"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    const PING: &str = r#"
openapi: 3.0.3
info: {title: t, version: "1"}
paths:
  /ping:
    get:
      responses:
        "200": {description: ok}
"#;

    #[test]
    fn minimal_document_synthesizes_operation_id() {
        let spec = parse_spec(PING, DocumentFormat::Auto).unwrap();
        assert_eq!(spec.operations.len(), 1);
        assert_eq!(spec.operations[0].id, "GET /ping");
        assert!(spec.operations[0].parameters.is_empty());
        assert!(spec.operations[0].request_body_schema.is_none());
    }

    #[test]
    fn placeholder_without_path_parameter_is_malformed() {
        let doc = r#"
openapi: 3.0.0
info: {title: t, version: "1"}
paths:
  /items/{id}:
    get:
      responses: {"200": {description: ok}}
"#;
        let err = parse_spec(doc, DocumentFormat::Yaml).unwrap_err();
        assert!(matches!(err, OasError::MalformedDocument(_)), "{err}");
    }

    #[test]
    fn shared_component_inlines_identically() {
        let doc = json!({
            "openapi": "3.1.0",
            "info": {"title": "t", "version": "1"},
            "paths": {
                "/a": {"post": {"requestBody": {"content": {"application/json": {"schema": {"$ref": "#/components/schemas/Item"}}}}, "responses": {}}},
                "/b": {"put": {"requestBody": {"content": {"application/json": {"schema": {"$ref": "#/components/schemas/Item"}}}}, "responses": {}}}
            },
            "components": {"schemas": {"Item": {"type": "object", "required": ["n"], "properties": {"n": {"type": "integer", "minimum": 1}}}}}
        });
        let spec = parse_spec(&doc.to_string(), DocumentFormat::Json).unwrap();
        let a = spec.operations[0].request_body_schema.as_ref().unwrap();
        let b = spec.operations[1].request_body_schema.as_ref().unwrap();
        assert_eq!(a, b);
        assert_eq!(a.properties["n"].minimum, Some(1.0));
    }

    #[test]
    fn version_and_reference_errors() {
        let swagger = r#"{"swagger": "2.0", "info": {}, "paths": {}}"#;
        assert!(matches!(
            parse_spec(swagger, DocumentFormat::Auto),
            Err(OasError::UnsupportedVersion(_))
        ));
        let external = json!({
            "openapi": "3.0.0", "info": {},
            "paths": {"/x": {"get": {"parameters": [{"$ref": "other.yaml#/p"}], "responses": {}}}}
        });
        assert!(matches!(
            parse_spec(&external.to_string(), DocumentFormat::Auto),
            Err(OasError::ExternalRefNotSupported(_))
        ));
        let dangling = json!({
            "openapi": "3.0.0", "info": {},
            "paths": {"/x": {"get": {"parameters": [{"$ref": "#/components/parameters/nope"}], "responses": {}}}}
        });
        assert!(matches!(
            parse_spec(&dangling.to_string(), DocumentFormat::Auto),
            Err(OasError::UnresolvableRef(_))
        ));
        assert!(matches!(
            parse_spec("   ", DocumentFormat::Auto),
            Err(OasError::MalformedDocument(_))
        ));
        assert!(matches!(
            parse_spec("{not json", DocumentFormat::Auto),
            Err(OasError::MalformedDocument(_))
        ));
    }

    #[test]
    fn recursive_reference_is_cut_at_fixed_depth() {
        let doc = json!({
            "openapi": "3.0.0", "info": {},
            "paths": {"/n": {"get": {"responses": {"200": {"description": "", "content": {"application/json": {"schema": {"$ref": "#/components/schemas/Node"}}}}}}}},
            "components": {"schemas": {"Node": {"type": "object", "properties": {"next": {"$ref": "#/components/schemas/Node"}}}}}
        });
        let spec = parse_spec(&doc.to_string(), DocumentFormat::Auto).unwrap();
        let mut node = &spec.operations[0].response_schemas["200"];
        let mut depth = 0;
        while !node.recursive {
            node = &node.properties["next"];
            depth += 1;
        }
        assert_eq!(depth, MAX_REF_EXPANSION);
    }

    #[test]
    fn duplicate_ids_get_numeric_suffix() {
        let doc = json!({
            "openapi": "3.0.0", "info": {},
            "paths": {
                "/a": {"get": {"operationId": "op", "responses": {}}},
                "/b": {"get": {"operationId": "op", "responses": {}}, "post": {"operationId": "op", "responses": {}}}
            }
        });
        let spec = parse_spec(&doc.to_string(), DocumentFormat::Auto).unwrap();
        let ids: Vec<_> = spec.operations.iter().map(|o| o.id.as_str()).collect();
        assert_eq!(ids, ["op", "op_2", "op_3"]);
    }

    #[test]
    fn inverted_bounds_are_malformed() {
        let err = convert_schema(&json!({"type": "integer", "minimum": 5, "maximum": 1})).unwrap_err();
        assert!(matches!(err, OasError::MalformedDocument(_)));
    }

    #[test]
    fn one_of_keeps_alternatives_and_uses_first() {
        let node = convert_schema(&json!({"oneOf": [{"type": "string", "maxLength": 3}, {"type": "integer"}]})).unwrap();
        assert_eq!(node.kind, Some(SchemaKind::String));
        assert_eq!(node.max_length, Some(3));
        assert_eq!(node.alternatives.len(), 2);
    }

    #[test]
    fn exclusive_bounds_normalize_across_versions() {
        let v30 = convert_schema(&json!({"type": "number", "minimum": 0, "exclusiveMinimum": true})).unwrap();
        let v31 = convert_schema(&json!({"type": "number", "exclusiveMinimum": 0})).unwrap();
        assert_eq!(v30, v31);
    }

    #[test]
    fn vendor_extensions_are_kept_verbatim() {
        let node = convert_schema(&json!({"type": "string", "x-internal": {"$ref": "#/nowhere"}})).unwrap();
        assert_eq!(node.extensions["x-internal"], json!({"$ref": "#/nowhere"}));
    }
}
