use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::TraceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Request,
    Response,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Request => "request",
            Direction::Response => "response",
        }
    }
}

/// Part of a message a key points into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Section {
    Path,
    Query,
    Header,
    Cookie,
    Body,
    Status,
}

impl Section {
    pub fn as_str(self) -> &'static str {
        match self {
            Section::Path => "path",
            Section::Query => "query",
            Section::Header => "header",
            Section::Cookie => "cookie",
            Section::Body => "body",
            Section::Status => "status",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "path" => Section::Path,
            "query" => Section::Query,
            "header" => Section::Header,
            "cookie" => Section::Cookie,
            "body" => Section::Body,
            "status" => Section::Status,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KeySegment {
    Field(String),
    Index(usize),
}

impl KeySegment {
    fn needs_quoting(name: &str) -> bool {
        name.is_empty() || name.contains(['.', '[', ']', '"'])
    }
}

/// Locates one value in a scenario:
/// `<alias>.<request|response>.<section>[.<field>|[<index>]]...`.
///
/// Field names containing `.`, `[`, `]` or `"` (or empty names) are written
/// as `["quoted"]` so every key parses back unambiguously.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TraceKey {
    alias: String,
    direction: Direction,
    section: Section,
    segments: Vec<KeySegment>,
}

impl TraceKey {
    pub fn new(
        alias: &str,
        direction: Direction,
        section: Section,
        segments: Vec<KeySegment>,
    ) -> Result<Self, TraceError> {
        let key = Self {
            alias: alias.to_string(),
            direction,
            section,
            segments,
        };
        key.validate()?;
        Ok(key)
    }

    pub fn status(alias: &str) -> Result<Self, TraceError> {
        Self::new(alias, Direction::Response, Section::Status, Vec::new())
    }

    /// Key of a named parameter, e.g. `alias.request.path.id`.
    pub fn param(alias: &str, direction: Direction, section: Section, name: &str) -> Result<Self, TraceError> {
        Self::new(alias, direction, section, vec![KeySegment::Field(name.to_string())])
    }

    fn validate(&self) -> Result<(), TraceError> {
        let bad = |why: &str| TraceError::InvalidKey {
            key: self.to_string(),
            reason: why.to_string(),
        };
        if !is_valid_alias(&self.alias) {
            return Err(bad("step alias must be non-empty and contain no '.', '[', ']' or whitespace"));
        }
        match self.section {
            Section::Status => {
                if self.direction != Direction::Response || !self.segments.is_empty() {
                    return Err(bad("status exists only as '<alias>.response.status'"));
                }
            }
            Section::Body => {}
            _ => {
                if !matches!(self.segments.first(), Some(KeySegment::Field(_))) {
                    return Err(bad("parameter keys need a parameter name"));
                }
            }
        }
        Ok(())
    }

    pub fn alias(&self) -> &str {
        &self.alias
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn section(&self) -> Section {
        self.section
    }

    pub fn segments(&self) -> &[KeySegment] {
        &self.segments
    }

    /// For non-body sections, the parameter name.
    pub fn param_name(&self) -> Option<&str> {
        match (self.section, self.segments.first()) {
            (Section::Body | Section::Status, _) => None,
            (_, Some(KeySegment::Field(n))) => Some(n),
            _ => None,
        }
    }

    pub fn child(&self, seg: KeySegment) -> Self {
        let mut k = self.clone();
        k.segments.push(seg);
        k
    }

    /// True when `self` equals `prefix` or lies beneath it.
    pub fn starts_with(&self, prefix: &TraceKey) -> bool {
        self.alias == prefix.alias
            && self.direction == prefix.direction
            && self.section == prefix.section
            && self.segments.starts_with(&prefix.segments)
    }

    /// Same location with a different step alias.
    /// Parses a request key of step `alias`, also accepting forms relative
    /// to the step such as `body.until` or `request.body.until`.
    pub fn parse_request_key(alias: &str, text: &str) -> Result<Self, TraceError> {
        let text = text.trim();
        let full = if text.starts_with(&format!("{alias}.")) {
            text.to_string()
        } else if text.starts_with("request.") {
            format!("{alias}.{text}")
        } else {
            format!("{alias}.request.{text}")
        };
        let key: TraceKey = full.parse()?;
        if key.alias() != alias || key.direction() != Direction::Request {
            return Err(TraceError::InvalidKey {
                key: text.to_string(),
                reason: format!("not a request key of step '{alias}'"),
            });
        }
        Ok(key)
    }

    pub fn with_alias(&self, alias: &str) -> Result<Self, TraceError> {
        Self::new(alias, self.direction, self.section, self.segments.clone())
    }
}

pub fn is_valid_alias(alias: &str) -> bool {
    !alias.is_empty()
        && !alias
            .chars()
            .any(|c| c == '.' || c == '[' || c == ']' || c.is_whitespace())
}

impl fmt::Display for TraceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}.{}", self.alias, self.direction.as_str(), self.section.as_str())?;
        for seg in &self.segments {
            match seg {
                KeySegment::Field(name) if KeySegment::needs_quoting(name) => {
                    let quoted = serde_json::to_string(name).map_err(|_| fmt::Error)?;
                    write!(f, "[{quoted}]")?;
                }
                KeySegment::Field(name) => write!(f, ".{name}")?,
                KeySegment::Index(i) => write!(f, "[{i}]")?,
            }
        }
        Ok(())
    }
}

impl FromStr for TraceKey {
    type Err = TraceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |why: &str| TraceError::InvalidKey {
            key: s.to_string(),
            reason: why.to_string(),
        };
        let mut parts = s.splitn(3, '.');
        let alias = parts.next().unwrap_or_default();
        let direction = match parts.next() {
            Some("request") => Direction::Request,
            Some("response") => Direction::Response,
            _ => return Err(bad("second component must be 'request' or 'response'")),
        };
        let rest = parts.next().ok_or_else(|| bad("missing section"))?;
        let section_end = rest.find(['.', '[']).unwrap_or(rest.len());
        let section =
            Section::parse(&rest[..section_end]).ok_or_else(|| bad("unknown section"))?;
        let segments = parse_segments(&rest[section_end..]).map_err(|why| bad(&why))?;
        let key = TraceKey {
            alias: alias.to_string(),
            direction,
            section,
            segments,
        };
        key.validate()?;
        Ok(key)
    }
}

fn parse_segments(mut rest: &str) -> Result<Vec<KeySegment>, String> {
    let mut segments = Vec::new();
    while !rest.is_empty() {
        if let Some(r) = rest.strip_prefix('.') {
            let end = r.find(['.', '[']).unwrap_or(r.len());
            let name = &r[..end];
            if name.is_empty() || name.contains([']', '"']) {
                return Err(format!("invalid field name '{name}'"));
            }
            segments.push(KeySegment::Field(name.to_string()));
            rest = &r[end..];
        } else if rest.starts_with("[\"") {
            let mut de = serde_json::Deserializer::from_str(&rest[1..]).into_iter::<String>();
            let name = match de.next() {
                Some(Ok(name)) => name,
                _ => return Err("unterminated quoted field".into()),
            };
            let consumed = 1 + de.byte_offset();
            rest = rest[consumed..]
                .strip_prefix(']')
                .ok_or("expected ']' after quoted field")?;
            segments.push(KeySegment::Field(name));
        } else if let Some(r) = rest.strip_prefix('[') {
            let end = r.find(']').ok_or("unterminated index")?;
            let idx: usize = r[..end]
                .parse()
                .map_err(|_| format!("invalid array index '{}'", &r[..end]))?;
            segments.push(KeySegment::Index(idx));
            rest = &r[end + 1..];
        } else {
            return Err(format!("unexpected text '{rest}'"));
        }
    }
    Ok(segments)
}

impl Serialize for TraceKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TraceKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_example() {
        let k: TraceKey = "createBooking.response.body.rooms[0].id".parse().unwrap();
        assert_eq!(k.alias(), "createBooking");
        assert_eq!(k.direction(), Direction::Response);
        assert_eq!(k.section(), Section::Body);
        assert_eq!(
            k.segments(),
            &[
                KeySegment::Field("rooms".into()),
                KeySegment::Index(0),
                KeySegment::Field("id".into())
            ]
        );
        assert_eq!(k.to_string(), "createBooking.response.body.rooms[0].id");
    }

    #[test]
    fn quoted_fields_round_trip() {
        let k = TraceKey::new(
            "a",
            Direction::Request,
            Section::Body,
            vec![KeySegment::Field("x.y[0]".into()), KeySegment::Field("".into())],
        )
        .unwrap();
        let text = k.to_string();
        assert_eq!(text, r#"a.request.body["x.y[0]"][""]"#);
        assert_eq!(text.parse::<TraceKey>().unwrap(), k);
    }

    #[test]
    fn rejects_malformed_keys() {
        for bad in [
            "a.req.body",
            "a.request",
            "a.request.nowhere",
            ".request.body",
            "a.request.status",
            "a.response.status.x",
            "a.request.path",
            "a.request.body[x]",
            "a.request.body..x",
            "a[0].request.body",
        ] {
            assert!(bad.parse::<TraceKey>().is_err(), "{bad} should be rejected");
        }
    }

    #[test]
    fn prefix_relation() {
        let parent: TraceKey = "s.request.body.a".parse().unwrap();
        let child: TraceKey = "s.request.body.a[2].b".parse().unwrap();
        assert!(child.starts_with(&parent));
        assert!(!parent.starts_with(&child));
    }
}
