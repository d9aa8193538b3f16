//! Executable test cases assembled from execution traces, and their
//! serialization as Postman collections.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde_json::Value;
use thiserror::Error;

use crate::engine::{build_template, Cell, EngineError, HttpExchange, RequestTemplate};
use crate::happy_path::OperationPlan;
use crate::negative::{apply_overrides, InvalidValueSet, NegativeError, TestKind, TestScenario};
use crate::oas::ApiSpec;
use crate::trace::{Direction, ExecutionTrace, KeySegment, Literal, Section, TraceError, TraceKey, TraceValue};

mod postman;

pub use postman::{
    check_chaining, import_collection, validate_collection, CollectionError, PostmanEmitter, POSTMAN_SCHEMA_URL,
};

/// Name of the collection variable holding the service base URL.
pub const BASE_URL_VARIABLE: &str = "baseUrl";

pub const HAPPY_CASE_NAME: &str = "happyPath";

#[derive(Debug, Error, PartialEq)]
pub enum BuilderError {
    #[error("'{key}' depends on '{reference}', which no earlier step of the plan produces")]
    DanglingDependency { key: TraceKey, reference: TraceKey },
    #[error("unknown operation '{0}'")]
    UnknownOperation(String),
    #[error("suite is empty")]
    EmptySuite,
    #[error("step '{alias}': {source}")]
    Render {
        alias: String,
        #[source]
        source: EngineError,
    },
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Negative(#[from] NegativeError),
    #[error("serialization failed: {0}")]
    Serialize(String),
}

/// Reads one value out of a response at run time and stores it under
/// `variable` for later steps.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionDirective {
    /// A response key of the producing step.
    pub source: TraceKey,
    pub variable: String,
}

impl ExtractionDirective {
    /// Evaluates the directive against a live response. The whole body is
    /// taken as JSON when it parses and as text otherwise.
    pub fn extract(&self, exchange: &HttpExchange) -> Option<Value> {
        match self.source.section() {
            Section::Status => Some(Value::from(exchange.status)),
            Section::Header => {
                let name = self.source.param_name()?;
                exchange.response_header(name).map(|v| Value::String(v.to_string()))
            }
            Section::Body => {
                let parsed = serde_json::from_str::<Value>(&exchange.response_body);
                let segs = self.source.segments();
                if segs.is_empty() {
                    return Some(parsed.unwrap_or_else(|_| Value::String(exchange.response_body.clone())));
                }
                let mut cur = parsed.ok()?;
                for s in segs {
                    cur = match (s, cur) {
                        (KeySegment::Field(f), Value::Object(mut m)) => m.remove(f)?,
                        (KeySegment::Index(i), Value::Array(mut a)) if *i < a.len() => a.swap_remove(*i),
                        _ => return None,
                    };
                }
                Some(cur)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestStep {
    pub alias: String,
    pub operation_id: String,
    pub path_template: String,
    pub template: RequestTemplate,
    pub extractions: Vec<ExtractionDirective>,
    /// Expected status class: 2 for prerequisites and happy cases, 4 for the
    /// final step of a negative case.
    pub expected_class: u16,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestCase {
    pub name: String,
    pub kind: TestKind,
    pub description: String,
    /// Keys a negative case overrode in the final step, sorted.
    pub overrides: BTreeSet<TraceKey>,
    pub steps: Vec<TestStep>,
}

impl TestCase {
    pub fn final_step(&self) -> Option<&TestStep> {
        self.steps.last()
    }
}

/// Collection-level metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteMeta {
    pub name: String,
    pub base_url: String,
}

/// Turns a suite into a document for some test framework.
pub trait SuiteEmitter {
    fn file_name(&self, operation_id: &str) -> String;
    fn emit(&self, suite: &[TestCase], meta: &SuiteMeta) -> Result<String, BuilderError>;
}

/// Maps every character outside `[A-Za-z0-9_-]` to `_`.
pub fn sanitize_name(text: &str) -> String {
    text.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
        .collect()
}

/// Hands out one variable name per source key, unique within a case.
#[derive(Default)]
struct VariableNames {
    by_key: HashMap<TraceKey, String>,
    taken: HashMap<String, TraceKey>,
}

impl VariableNames {
    fn name_for(&mut self, key: &TraceKey) -> (String, bool) {
        if let Some(n) = self.by_key.get(key) {
            return (n.clone(), false);
        }
        let base = sanitize_name(&key.to_string());
        let mut name = base.clone();
        let mut n = 2;
        while self.taken.contains_key(&name) || name == BASE_URL_VARIABLE {
            name = format!("{base}_{n}");
            n += 1;
        }
        self.taken.insert(name.clone(), key.clone());
        self.by_key.insert(key.clone(), name.clone());
        (name, true)
    }
}

/// Builds one test case from a plan and a trace holding values for every
/// step. Generated values are inlined; values depending on an earlier
/// response become variables filled in by an extraction on the producing
/// step. Values depending on another request value are inlined.
pub fn build_test_case(
    spec: &ApiSpec,
    plan: &OperationPlan,
    trace: &ExecutionTrace,
    name: &str,
    kind: TestKind,
    description: &str,
) -> Result<TestCase, BuilderError> {
    let position: HashMap<&str, usize> = plan.steps.iter().enumerate().map(|(i, s)| (s.alias.as_str(), i)).collect();
    let mut names = VariableNames::default();
    let mut extractions: BTreeMap<usize, Vec<ExtractionDirective>> = BTreeMap::new();
    let mut steps = Vec::with_capacity(plan.steps.len());

    for (i, step) in plan.steps.iter().enumerate() {
        let op = spec
            .operation(&step.operation_id)
            .ok_or_else(|| BuilderError::UnknownOperation(step.operation_id.clone()))?;
        let mut cells = Vec::new();
        for (key, value) in trace.step_entries(&step.alias, Direction::Request) {
            let cell = match value {
                TraceValue::Generated(l) => Cell::Literal(l.clone()),
                TraceValue::Dependent(r) => {
                    let dangling = || BuilderError::DanglingDependency {
                        key: key.clone(),
                        reference: r.clone(),
                    };
                    let mut cur = r;
                    loop {
                        match trace.get(cur).ok_or_else(dangling)? {
                            TraceValue::Dependent(next) => cur = next,
                            TraceValue::Generated(lit) if cur.direction() == Direction::Request => {
                                break Cell::Literal(lit.clone())
                            }
                            TraceValue::Generated(lit) => {
                                let producer = *position.get(cur.alias()).ok_or_else(dangling)?;
                                if producer >= i {
                                    return Err(dangling());
                                }
                                let Literal::Json(sample) = lit else {
                                    break Cell::Literal(Literal::Absent);
                                };
                                let (var, fresh) = names.name_for(cur);
                                if fresh {
                                    extractions.entry(producer).or_default().push(ExtractionDirective {
                                        source: cur.clone(),
                                        variable: var.clone(),
                                    });
                                }
                                break Cell::Variable {
                                    name: var,
                                    sample: sample.clone(),
                                };
                            }
                        }
                    }
                }
            };
            cells.push((key.clone(), cell));
        }
        let template = build_template(op, &cells).map_err(|source| BuilderError::Render {
            alias: step.alias.clone(),
            source,
        })?;
        let last = i + 1 == plan.steps.len();
        steps.push(TestStep {
            alias: step.alias.clone(),
            operation_id: step.operation_id.clone(),
            path_template: op.path_template.clone(),
            template,
            extractions: Vec::new(),
            expected_class: if last { kind.expected_class() } else { 2 },
        });
    }
    for (i, list) in extractions {
        steps[i].extractions = list;
    }
    Ok(TestCase {
        name: name.to_string(),
        kind,
        description: description.to_string(),
        overrides: BTreeSet::new(),
        steps,
    })
}

/// The happy-path case of an operation.
pub fn build_happy_case(spec: &ApiSpec, plan: &OperationPlan, trace: &ExecutionTrace) -> Result<TestCase, BuilderError> {
    build_test_case(
        spec,
        plan,
        trace,
        HAPPY_CASE_NAME,
        TestKind::HappyPath,
        &format!("Valid values for every step; {} must succeed.", plan.target_operation_id),
    )
}

/// A negative case: the happy trace with the scenario's overrides applied.
pub fn build_negative_case(
    spec: &ApiSpec,
    plan: &OperationPlan,
    trace: &ExecutionTrace,
    scenario: &TestScenario,
    invalid: &InvalidValueSet,
) -> Result<TestCase, BuilderError> {
    let mutated = apply_overrides(trace, invalid)?;
    let mut case = build_test_case(spec, plan, &mutated, &scenario.name, scenario.kind, &scenario.description)?;
    case.overrides = invalid.overrides.keys().cloned().collect();
    Ok(case)
}
