//! Property checks over traces and substitution. Each returns `Err` with
//! the shrunk counterexample so callers can assert or report.

#![allow(dead_code)]

use std::collections::BTreeSet;

use happypath_core::negative::{substitute, InvalidValueSet};
use happypath_core::trace::{
    diff, flatten, resolve, resolve_all, unflatten, Direction, ExecutionTrace, KeySegment, Literal, MessagePayload,
    ResolvedValues, TraceError, TraceKey, TraceValue,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use serde_json::Value;

pub fn run<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn field_name() -> impl Strategy<Value = String> {
    prop_oneof![
        4 => "[a-z][a-z0-9_]{0,5}",
        1 => "[a-z.\\[\\]\" -]{0,4}",
    ]
}

fn leaf() -> impl Strategy<Value = Value> {
    prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::from),
        any::<i64>().prop_map(Value::from),
        "[ -~]{0,8}".prop_map(Value::from),
    ]
}

/// JSON values nested at most `depth` containers deep.
pub fn json(depth: u32) -> impl Strategy<Value = Value> {
    leaf().prop_recursive(depth, 48, 5, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..5).prop_map(Value::Array),
            prop::collection::vec((field_name(), inner), 0..5)
                .prop_map(|kv| Value::Object(kv.into_iter().collect())),
        ]
    })
}

fn nesting(v: &Value) -> u32 {
    match v {
        Value::Array(a) if !a.is_empty() => 1 + a.iter().map(nesting).max().unwrap_or(0),
        Value::Object(m) if !m.is_empty() => 1 + m.values().map(nesting).max().unwrap_or(0),
        _ => 0,
    }
}

fn literal() -> impl Strategy<Value = Literal> {
    prop_oneof![9 => json(2).prop_map(Literal::Json), 1 => Just(Literal::Absent)]
}

fn key(i: usize, path: &[String]) -> TraceKey {
    let segs = path.iter().map(|p| KeySegment::Field(p.clone())).collect();
    TraceKey::new(&format!("s{}", i % 4), Direction::Request, happypath_core::trace::Section::Body, segs).unwrap()
}

/// Flattening a body and rebuilding it from the leaf paths gives the body
/// back, and every key survives a text round trip.
pub fn flatten_round_trip(cases: u32) -> Result<(), String> {
    run(cases, json(5), |body| {
        prop_assert!(nesting(&body) <= 5);
        let payload = MessagePayload {
            body: Some(body.clone()),
            ..MessagePayload::default()
        };
        let pairs = flatten("step", Direction::Request, &payload, usize::MAX).unwrap();
        for (k, _) in &pairs {
            let back: TraceKey = k.to_string().parse().map_err(|e: TraceError| TestCaseError::fail(e.to_string()))?;
            prop_assert_eq!(&back, k);
        }
        let rebuilt = unflatten(pairs.iter().map(|(k, l)| (k.segments(), l))).unwrap();
        prop_assert_eq!(rebuilt, Some(body));
        Ok(())
    })
}

/// Random happy mappings and override subsets: the keys that differ after
/// substitution are exactly the overridden ones.
pub fn substitution_diff_is_override_set(cases: u32) -> Result<(), String> {
    let strategy = prop::collection::vec(
        (prop::collection::vec(field_name(), 0..3), literal(), any::<bool>(), literal()),
        1..24,
    );
    run(cases, strategy, |rows| {
        let mut happy = ResolvedValues::default();
        let mut expected = BTreeSet::new();
        let mut overrides = Vec::new();
        for (i, (path, value, chosen, replacement)) in rows.into_iter().enumerate() {
            let k = key(i, &[vec![format!("k{i}")], path].concat());
            if chosen {
                // Keep the replacement distinct from the happy value.
                let replacement = if replacement == value {
                    match value {
                        Literal::Absent => Literal::Json(Value::Null),
                        _ => Literal::Absent,
                    }
                } else {
                    replacement
                };
                overrides.push((k.clone(), replacement));
                expected.insert(k.clone());
            }
            happy.insert(k, value);
        }
        let invalid = InvalidValueSet {
            scenario: "p".into(),
            overrides: overrides.into_iter().collect(),
        };
        let mutated = substitute(&happy, &invalid).unwrap();
        prop_assert_eq!(mutated.keys().collect::<Vec<_>>(), happy.keys().collect::<Vec<_>>());
        prop_assert_eq!(diff(&happy, &mutated).unwrap(), expected);
        Ok(())
    })
}

/// Rows of (dependent?, reference seed, literal) become a trace whose
/// references always point backwards.
fn trace_rows() -> impl Strategy<Value = Vec<(bool, usize, Literal)>> {
    prop::collection::vec((any::<bool>(), any::<usize>(), literal()), 1..30)
}

fn build_trace(rows: &[(bool, usize, Literal)]) -> ExecutionTrace {
    let mut t = ExecutionTrace::new();
    let mut keys: Vec<TraceKey> = Vec::new();
    for (i, (dependent, seed, lit)) in rows.iter().enumerate() {
        let k = key(i, &[format!("v{i}")]);
        let v = if *dependent && !keys.is_empty() {
            TraceValue::Dependent(keys[seed % keys.len()].clone())
        } else {
            TraceValue::Generated(lit.clone())
        };
        t.insert(k.clone(), v).unwrap();
        keys.push(k);
    }
    t
}

/// Follows references by linear search, without the trace index.
fn chase(t: &ExecutionTrace, k: &TraceKey) -> Literal {
    let mut cur = k.clone();
    loop {
        let (_, v) = t.entries().iter().find(|(x, _)| *x == cur).unwrap();
        match v {
            TraceValue::Generated(l) => return l.clone(),
            TraceValue::Dependent(next) => cur = next.clone(),
        }
    }
}

pub fn resolve_all_matches_per_key(cases: u32) -> Result<(), String> {
    run(cases, trace_rows(), |rows| {
        let t = build_trace(&rows);
        let all = resolve_all(&t).unwrap();
        prop_assert_eq!(all.len(), t.len());
        for ((k, lit), (tk, _)) in all.iter().zip(t.entries()) {
            prop_assert_eq!(k, tk);
            prop_assert_eq!(lit, &resolve(&t, k).unwrap());
            prop_assert_eq!(lit, &chase(&t, k));
        }
        Ok(())
    })
}

pub fn dependent_on_absent_key_is_rejected(cases: u32) -> Result<(), String> {
    run(cases, (trace_rows(), field_name()), |(rows, name)| {
        let mut t = build_trace(&rows);
        let before = t.clone();
        let missing = key(rows.len() + 1, &[format!("missing_{name}")]);
        let err = t
            .insert(key(rows.len(), &["x".into()]), TraceValue::Dependent(missing))
            .unwrap_err();
        let is_forward_reference = matches!(err, TraceError::ForwardReference { .. });
        prop_assert!(is_forward_reference, "{}", err);
        prop_assert_eq!(t, before);
        Ok(())
    })
}
