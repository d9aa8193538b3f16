//! The execution trace: an ordered key/value record of every request and
//! response value in a scenario. Values are either generated literals or
//! references to keys stored earlier.

mod flatten;
mod key;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use flatten::{flatten, flatten_capped, unflatten, Flattened, MessagePayload, DEFAULT_PAIR_CAP};
pub use key::{is_valid_alias, Direction, KeySegment, Section, TraceKey};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TraceError {
    #[error("invalid trace key '{key}': {reason}")]
    InvalidKey { key: String, reason: String },
    #[error("duplicate trace key '{0}'")]
    DuplicateKey(TraceKey),
    #[error("'{key}' references '{target}', which is not stored earlier in the trace")]
    ForwardReference { key: TraceKey, target: TraceKey },
    #[error("key '{0}' is not in the trace")]
    MissingKey(TraceKey),
    #[error("reference chain from '{from}' reaches missing key '{missing}'")]
    DanglingReference { from: TraceKey, missing: TraceKey },
    #[error("reference cycle through '{0}'")]
    CycleDetected(TraceKey),
    #[error("while resolving '{key}': {source}")]
    At {
        key: TraceKey,
        #[source]
        source: Box<TraceError>,
    },
    #[error("payload flattens to {count} pairs, above the cap of {cap}")]
    PayloadTooLarge { count: usize, cap: usize },
    #[error("conflicting assignments at '{0}'")]
    UnflattenConflict(String),
    #[error("mappings have different key sets")]
    KeySetMismatch,
    #[error("malformed trace file: {0}")]
    Malformed(String),
}

/// A leaf value. Scalars and null come from payloads; empty containers are
/// kept as leaves so payloads rebuild exactly. `Absent` marks a parameter or
/// property to leave out of a request.
#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Json(Value),
    Absent,
}

impl Literal {
    pub fn as_json(&self) -> Option<&Value> {
        match self {
            Literal::Json(v) => Some(v),
            Literal::Absent => None,
        }
    }

    pub fn is_absent(&self) -> bool {
        matches!(self, Literal::Absent)
    }
}

impl From<Value> for Literal {
    fn from(v: Value) -> Self {
        Literal::Json(v)
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Json(v) => write!(f, "{v}"),
            Literal::Absent => f.write_str("<absent>"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceValue {
    Generated(Literal),
    Dependent(TraceKey),
}

/// Key to resolved literal, in trace order.
pub type ResolvedValues = IndexMap<TraceKey, Literal>;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExecutionTrace {
    entries: Vec<(TraceKey, TraceValue)>,
    index: HashMap<TraceKey, usize>,
}

impl ExecutionTrace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends an entry. Keys are unique and references must point to keys
    /// already present.
    pub fn insert(&mut self, key: TraceKey, value: TraceValue) -> Result<(), TraceError> {
        if self.index.contains_key(&key) {
            return Err(TraceError::DuplicateKey(key));
        }
        if let TraceValue::Dependent(target) = &value {
            if !self.index.contains_key(target) {
                return Err(TraceError::ForwardReference {
                    key,
                    target: target.clone(),
                });
            }
        }
        self.index.insert(key.clone(), self.entries.len());
        self.entries.push((key, value));
        Ok(())
    }

    pub fn get(&self, key: &TraceKey) -> Option<&TraceValue> {
        self.index.get(key).map(|&i| &self.entries[i].1)
    }

    pub fn contains(&self, key: &TraceKey) -> bool {
        self.index.contains_key(key)
    }

    pub fn position(&self, key: &TraceKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn entries(&self) -> &[(TraceKey, TraceValue)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &TraceKey> {
        self.entries.iter().map(|(k, _)| k)
    }

    /// Entries of one step and direction, in trace order.
    pub fn step_entries<'a>(
        &'a self,
        alias: &'a str,
        direction: Direction,
    ) -> impl Iterator<Item = &'a (TraceKey, TraceValue)> + 'a {
        self.entries
            .iter()
            .filter(move |(k, _)| k.alias() == alias && k.direction() == direction)
    }

    /// Serializes as an ordered array of `{key, kind, value|ref}`.
    pub fn to_json(&self) -> Value {
        let records: Vec<TraceRecord> = self.entries.iter().map(TraceRecord::from_entry).collect();
        serde_json::to_value(records).unwrap_or(Value::Null)
    }

    pub fn from_json(value: &Value) -> Result<Self, TraceError> {
        let records: Vec<TraceRecord> = serde_json::from_value(value.clone())
            .map_err(|e| TraceError::Malformed(e.to_string()))?;
        let mut trace = ExecutionTrace::new();
        for r in records {
            let (k, v) = r.into_entry()?;
            trace.insert(k, v)?;
        }
        Ok(trace)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum RecordKind {
    Generated { value: Value },
    Dependent {
        #[serde(rename = "ref")]
        target: TraceKey,
    },
    Absent,
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceRecord {
    key: TraceKey,
    #[serde(flatten)]
    kind: RecordKind,
}

impl TraceRecord {
    fn from_entry((key, value): &(TraceKey, TraceValue)) -> Self {
        let kind = match value {
            TraceValue::Generated(Literal::Json(v)) => RecordKind::Generated { value: v.clone() },
            TraceValue::Generated(Literal::Absent) => RecordKind::Absent,
            TraceValue::Dependent(t) => RecordKind::Dependent { target: t.clone() },
        };
        TraceRecord {
            key: key.clone(),
            kind,
        }
    }

    fn into_entry(self) -> Result<(TraceKey, TraceValue), TraceError> {
        let value = match self.kind {
            RecordKind::Generated { value } => TraceValue::Generated(Literal::Json(value)),
            RecordKind::Absent => TraceValue::Generated(Literal::Absent),
            RecordKind::Dependent { target } => TraceValue::Dependent(target),
        };
        Ok((self.key, value))
    }
}

/// Follows references from `key` to a generated literal.
pub fn resolve(trace: &ExecutionTrace, key: &TraceKey) -> Result<Literal, TraceError> {
    let mut current = match trace.get(key) {
        Some(v) => v,
        None => return Err(TraceError::MissingKey(key.clone())),
    };
    let mut seen: HashSet<&TraceKey> = HashSet::new();
    seen.insert(key);
    loop {
        match current {
            TraceValue::Generated(lit) => return Ok(lit.clone()),
            TraceValue::Dependent(target) => {
                if !seen.insert(target) {
                    return Err(TraceError::CycleDetected(target.clone()));
                }
                current = trace.get(target).ok_or_else(|| TraceError::DanglingReference {
                    from: key.clone(),
                    missing: target.clone(),
                })?;
            }
        }
    }
}

/// Resolves every key, keeping trace order.
pub fn resolve_all(trace: &ExecutionTrace) -> Result<ResolvedValues, TraceError> {
    let mut out = ResolvedValues::with_capacity(trace.len());
    for (key, value) in trace.entries() {
        let lit = match value {
            TraceValue::Generated(lit) => lit.clone(),
            // References point backwards, so the target is usually resolved.
            TraceValue::Dependent(target) => match out.get(target) {
                Some(lit) => lit.clone(),
                None => resolve(trace, key).map_err(|e| TraceError::At {
                    key: key.clone(),
                    source: Box::new(e),
                })?,
            },
        };
        out.insert(key.clone(), lit);
    }
    Ok(out)
}

/// Keys whose literals differ between two mappings over the same keys.
pub fn diff(a: &ResolvedValues, b: &ResolvedValues) -> Result<BTreeSet<TraceKey>, TraceError> {
    if a.len() != b.len() || a.keys().any(|k| !b.contains_key(k)) {
        return Err(TraceError::KeySetMismatch);
    }
    Ok(a
        .iter()
        .filter(|(k, v)| b.get(*k) != Some(v))
        .map(|(k, _)| k.clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn k(s: &str) -> TraceKey {
        s.parse().unwrap()
    }

    fn gen(v: Value) -> TraceValue {
        TraceValue::Generated(Literal::Json(v))
    }

    #[test]
    fn one_hop_resolution() {
        let mut t = ExecutionTrace::new();
        t.insert(k("a.response.body.id"), gen(json!(7))).unwrap();
        t.insert(k("b.request.path.id"), TraceValue::Dependent(k("a.response.body.id")))
            .unwrap();
        assert_eq!(resolve(&t, &k("b.request.path.id")).unwrap(), Literal::Json(json!(7)));
        assert_eq!(resolve(&t, &k("a.response.body.id")).unwrap(), Literal::Json(json!(7)));
    }

    /// Independent oracle: recursive walk with no cycle tracking.
    fn naive(t: &ExecutionTrace, key: &TraceKey) -> Option<Literal> {
        match t.get(key)? {
            TraceValue::Generated(l) => Some(l.clone()),
            TraceValue::Dependent(r) => naive(t, r),
        }
    }

    #[test]
    fn chain_of_depth_five_reaches_root() {
        let mut t = ExecutionTrace::new();
        t.insert(k("s0.response.body.v"), gen(json!("root"))).unwrap();
        for i in 1..=5 {
            let prev = if i == 1 {
                k("s0.response.body.v")
            } else {
                k(&format!("s{}.request.query.v", i - 1))
            };
            t.insert(k(&format!("s{i}.request.query.v")), TraceValue::Dependent(prev))
                .unwrap();
        }
        let tip = k("s5.request.query.v");
        assert_eq!(resolve(&t, &tip).unwrap(), naive(&t, &tip).unwrap());
        assert_eq!(resolve(&t, &tip).unwrap(), Literal::Json(json!("root")));
    }

    #[test]
    fn insertion_rules() {
        let mut t = ExecutionTrace::new();
        let err = t
            .insert(k("b.request.path.id"), TraceValue::Dependent(k("a.response.body.id")))
            .unwrap_err();
        assert!(matches!(err, TraceError::ForwardReference { .. }));
        let err = t
            .insert(k("a.request.path.id"), TraceValue::Dependent(k("a.request.path.id")))
            .unwrap_err();
        assert!(matches!(err, TraceError::ForwardReference { .. }));
        t.insert(k("a.request.path.id"), gen(json!(1))).unwrap();
        assert!(matches!(
            t.insert(k("a.request.path.id"), gen(json!(2))),
            Err(TraceError::DuplicateKey(_))
        ));
        assert!(matches!(
            resolve(&t, &k("zzz.request.path.id")),
            Err(TraceError::MissingKey(_))
        ));
    }

    #[test]
    fn resolve_all_on_trivial_traces() {
        assert!(resolve_all(&ExecutionTrace::new()).unwrap().is_empty());
        let mut t = ExecutionTrace::new();
        t.insert(k("a.request.body.x"), gen(json!(1))).unwrap();
        t.insert(k("a.request.body.y"), gen(json!("s"))).unwrap();
        let r = resolve_all(&t).unwrap();
        let lits: Vec<_> = r.values().cloned().collect();
        assert_eq!(lits, vec![Literal::Json(json!(1)), Literal::Json(json!("s"))]);
    }

    #[test]
    fn diff_counts_changed_keys() {
        let mut a = ResolvedValues::new();
        a.insert(k("a.request.body.x"), Literal::Json(json!(1)));
        a.insert(k("a.request.body.y"), Literal::Json(json!(2)));
        let mut b = a.clone();
        assert!(diff(&a, &b).unwrap().is_empty());
        b.insert(k("a.request.body.y"), Literal::Absent);
        assert_eq!(diff(&a, &b).unwrap().into_iter().collect::<Vec<_>>(), vec![k("a.request.body.y")]);
        b.insert(k("a.request.body.z"), Literal::Json(json!(0)));
        assert_eq!(diff(&a, &b), Err(TraceError::KeySetMismatch));
    }

    #[test]
    fn json_file_round_trip() {
        let mut t = ExecutionTrace::new();
        t.insert(k("a.response.body.id"), gen(json!(5))).unwrap();
        t.insert(k("b.request.path.id"), TraceValue::Dependent(k("a.response.body.id")))
            .unwrap();
        t.insert(k("b.request.query.q"), TraceValue::Generated(Literal::Absent)).unwrap();
        let j = t.to_json();
        assert_eq!(
            j,
            json!([
                {"key": "a.response.body.id", "kind": "generated", "value": 5},
                {"key": "b.request.path.id", "kind": "dependent", "ref": "a.response.body.id"},
                {"key": "b.request.query.q", "kind": "absent"}
            ])
        );
        assert_eq!(ExecutionTrace::from_json(&j).unwrap(), t);
    }
}
