use std::collections::BTreeMap;

use indexmap::IndexMap;
use serde_json::{Map, Value};

use super::{Direction, KeySegment, Literal, Section, TraceError, TraceKey};

/// Default number of pairs one step may contribute before arrays are cut.
pub const DEFAULT_PAIR_CAP: usize = 2000;

/// Structured values of one HTTP message, grouped by location.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MessagePayload {
    pub status: Option<u16>,
    pub path: IndexMap<String, Value>,
    pub query: IndexMap<String, Value>,
    pub header: IndexMap<String, Value>,
    pub cookie: IndexMap<String, Value>,
    pub body: Option<Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Flattened {
    pub pairs: Vec<(TraceKey, Literal)>,
    /// Set when array tails were dropped to stay within the cap.
    pub truncated: bool,
}

/// Flattens a payload depth-first in document order, failing when it would
/// exceed `cap` pairs.
pub fn flatten(
    alias: &str,
    direction: Direction,
    payload: &MessagePayload,
    cap: usize,
) -> Result<Vec<(TraceKey, Literal)>, TraceError> {
    let full = flatten_capped(alias, direction, payload, usize::MAX)?;
    if full.pairs.len() > cap {
        return Err(TraceError::PayloadTooLarge {
            count: full.pairs.len(),
            cap,
        });
    }
    Ok(full.pairs)
}

/// Like [`flatten`], but stops emitting array elements once `cap` pairs
/// exist and reports the truncation.
pub fn flatten_capped(
    alias: &str,
    direction: Direction,
    payload: &MessagePayload,
    cap: usize,
) -> Result<Flattened, TraceError> {
    let mut out = Flattener {
        pairs: Vec::new(),
        cap,
        truncated: false,
    };
    if direction == Direction::Response {
        if let Some(status) = payload.status {
            out.pairs
                .push((TraceKey::status(alias)?, Literal::Json(Value::from(status))));
        }
    }
    let sections = [
        (Section::Path, &payload.path),
        (Section::Query, &payload.query),
        (Section::Header, &payload.header),
        (Section::Cookie, &payload.cookie),
    ];
    for (section, params) in sections {
        for (name, value) in params {
            let key = TraceKey::param(alias, direction, section, name)?;
            out.walk(key, value);
        }
    }
    if let Some(body) = &payload.body {
        let key = TraceKey::new(alias, direction, Section::Body, Vec::new())?;
        out.walk(key, body);
    }
    Ok(Flattened {
        pairs: out.pairs,
        truncated: out.truncated,
    })
}

struct Flattener {
    pairs: Vec<(TraceKey, Literal)>,
    cap: usize,
    truncated: bool,
}

impl Flattener {
    fn walk(&mut self, key: TraceKey, value: &Value) {
        match value {
            Value::Object(map) if !map.is_empty() => {
                for (name, child) in map {
                    self.walk(key.child(KeySegment::Field(name.clone())), child);
                }
            }
            Value::Array(items) if !items.is_empty() => {
                for (i, child) in items.iter().enumerate() {
                    if self.pairs.len() >= self.cap {
                        self.truncated = true;
                        break;
                    }
                    self.walk(key.child(KeySegment::Index(i)), child);
                }
            }
            leaf => self.pairs.push((key, Literal::Json(leaf.clone()))),
        }
    }
}

enum Node {
    Leaf(Value),
    Object(IndexMap<String, Node>),
    Array(BTreeMap<usize, Node>),
}

impl Node {
    fn into_value(self) -> Value {
        match self {
            Node::Leaf(v) => v,
            Node::Object(map) => Value::Object(
                map.into_iter()
                    .map(|(k, n)| (k, n.into_value()))
                    .collect::<Map<_, _>>(),
            ),
            // Gaps left by absent elements close up.
            Node::Array(items) => Value::Array(items.into_values().map(Node::into_value).collect()),
        }
    }
}

fn describe(path: &[KeySegment]) -> String {
    let mut s = String::from("$");
    for seg in path {
        match seg {
            KeySegment::Field(n) => {
                s.push('.');
                s.push_str(n);
            }
            KeySegment::Index(i) => s.push_str(&format!("[{i}]")),
        }
    }
    s
}

/// Rebuilds a JSON value from leaf paths relative to a common root.
/// `Absent` leaves are skipped; returns `None` when nothing remains.
pub fn unflatten<'a, I>(pairs: I) -> Result<Option<Value>, TraceError>
where
    I: IntoIterator<Item = (&'a [KeySegment], &'a Literal)>,
{
    let mut root: Option<Node> = None;
    for (path, lit) in pairs {
        let Literal::Json(value) = lit else { continue };
        insert(&mut root, path, value.clone(), path)?;
    }
    Ok(root.map(Node::into_value))
}

fn insert(
    slot: &mut Option<Node>,
    rest: &[KeySegment],
    value: Value,
    full: &[KeySegment],
) -> Result<(), TraceError> {
    let conflict = || TraceError::UnflattenConflict(describe(full));
    let Some((first, tail)) = rest.split_first() else {
        return match slot {
            None => {
                *slot = Some(Node::Leaf(value));
                Ok(())
            }
            Some(_) => Err(conflict()),
        };
    };
    match first {
        KeySegment::Field(name) => {
            let node = slot.get_or_insert_with(|| Node::Object(IndexMap::new()));
            let Node::Object(map) = node else {
                return Err(conflict());
            };
            match map.entry(name.clone()) {
                indexmap::map::Entry::Occupied(mut o) => {
                    let mut child = Some(std::mem::replace(o.get_mut(), Node::Leaf(Value::Null)));
                    let placed = insert(&mut child, tail, value, full);
                    if let Some(c) = child {
                        *o.get_mut() = c;
                    }
                    placed
                }
                indexmap::map::Entry::Vacant(v) => {
                    let mut child = None;
                    insert(&mut child, tail, value, full)?;
                    if let Some(c) = child {
                        v.insert(c);
                    }
                    Ok(())
                }
            }
        }
        KeySegment::Index(i) => {
            let node = slot.get_or_insert_with(|| Node::Array(BTreeMap::new()));
            let Node::Array(items) = node else {
                return Err(conflict());
            };
            let mut child = items.remove(i);
            let placed = insert(&mut child, tail, value, full);
            if let Some(c) = child {
                items.insert(*i, c);
            }
            placed
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn body_payload(v: Value) -> MessagePayload {
        MessagePayload {
            body: Some(v),
            ..MessagePayload::default()
        }
    }

    fn as_text(pairs: &[(TraceKey, Literal)]) -> Vec<(String, Literal)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    #[test]
    fn response_body_flattens_in_document_order() {
        let mut p = body_payload(json!({"id": 5, "tags": ["a"]}));
        p.status = Some(201);
        let pairs = flatten("createItem", Direction::Response, &p, DEFAULT_PAIR_CAP).unwrap();
        assert_eq!(
            as_text(&pairs),
            vec![
                ("createItem.response.status".to_string(), Literal::Json(json!(201))),
                ("createItem.response.body.id".to_string(), Literal::Json(json!(5))),
                ("createItem.response.body.tags[0]".to_string(), Literal::Json(json!("a"))),
            ]
        );
    }

    #[test]
    fn empty_bodies() {
        let resp = MessagePayload {
            status: Some(204),
            ..MessagePayload::default()
        };
        let pairs = flatten("x", Direction::Response, &resp, DEFAULT_PAIR_CAP).unwrap();
        assert_eq!(as_text(&pairs), vec![("x.response.status".to_string(), Literal::Json(json!(204)))]);
        let req = MessagePayload::default();
        assert!(flatten("x", Direction::Request, &req, DEFAULT_PAIR_CAP).unwrap().is_empty());
    }

    #[test]
    fn nested_payload_key() {
        let p = body_payload(json!({"a": {"b": [{"c": true}]}}));
        let pairs = flatten("x", Direction::Response, &p, DEFAULT_PAIR_CAP).unwrap();
        assert_eq!(as_text(&pairs), vec![("x.response.body.a.b[0].c".to_string(), Literal::Json(json!(true)))]);
    }

    #[test]
    fn cap_is_enforced_or_truncates() {
        let p = body_payload(json!({"items": (0..50).collect::<Vec<_>>()}));
        assert_eq!(
            flatten("x", Direction::Response, &p, 10),
            Err(TraceError::PayloadTooLarge { count: 50, cap: 10 })
        );
        let capped = flatten_capped("x", Direction::Response, &p, 10).unwrap();
        assert!(capped.truncated);
        assert_eq!(capped.pairs.len(), 10);
    }

    #[test]
    fn unflatten_rebuilds_and_detects_conflicts() {
        let v = json!({"from": "2024-01-01", "until": "2024-02-01", "e": [], "o": {}});
        let pairs = flatten("s", Direction::Request, &body_payload(v.clone()), DEFAULT_PAIR_CAP).unwrap();
        let rebuilt = unflatten(pairs.iter().map(|(k, l)| (k.segments(), l))).unwrap();
        assert_eq!(rebuilt, Some(v));

        let a = [KeySegment::Field("a".into())];
        let ab = [KeySegment::Field("a".into()), KeySegment::Field("b".into())];
        let one = Literal::Json(json!(1));
        let err = unflatten([(&a[..], &one), (&ab[..], &one)]).unwrap_err();
        assert!(matches!(err, TraceError::UnflattenConflict(_)));
        let err = unflatten([(&a[..], &one), (&a[..], &one)]).unwrap_err();
        assert!(matches!(err, TraceError::UnflattenConflict(_)));
    }

    #[test]
    fn absent_leaves_are_omitted() {
        let a = [KeySegment::Field("a".into())];
        let b = [KeySegment::Field("b".into())];
        let one = Literal::Json(json!(1));
        let v = unflatten([(&a[..], &one), (&b[..], &Literal::Absent)]).unwrap();
        assert_eq!(v, Some(json!({"a": 1})));
        assert_eq!(unflatten([(&b[..], &Literal::Absent)]).unwrap(), None);
    }
}
