//! Sequential execution of test cases and the run metrics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::builder::TestCase;
use crate::engine::{run_init_script, EnvInitScript, HttpExchange, RequestEngine};
use crate::llm::{tokens_per_test_case, TokenLedger};
use crate::negative::TestKind;
use crate::oas::HttpMethod;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Passed,
    Failed,
    ServerError,
    SetupFailed,
}

impl Verdict {
    pub const ALL: [Verdict; 4] = [Verdict::Passed, Verdict::Failed, Verdict::ServerError, Verdict::SetupFailed];

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Passed => "passed",
            Verdict::Failed => "failed",
            Verdict::ServerError => "server_error",
            Verdict::SetupFailed => "setup_failed",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Verdict of a final-step status for a case of `kind`.
pub fn classify(kind: TestKind, status: u16) -> Verdict {
    match (status / 100, kind) {
        (5, _) => Verdict::ServerError,
        (2, TestKind::HappyPath) | (4, TestKind::Structural | TestKind::Functional) => Verdict::Passed,
        _ => Verdict::Failed,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub alias: String,
    pub exchange: HttpExchange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub name: String,
    pub kind: TestKind,
    pub verdict: Verdict,
    pub final_status: Option<u16>,
    pub exchanges: Vec<StepRecord>,
    pub detail: String,
}

/// Runs one case: the init script first, then every step in order.
pub fn run_test_case(tc: &TestCase, engine: &RequestEngine, base_url: &str, init: Option<&EnvInitScript>) -> TestOutcome {
    let mut outcome = TestOutcome {
        name: tc.name.clone(),
        kind: tc.kind,
        verdict: Verdict::SetupFailed,
        final_status: None,
        exchanges: Vec::new(),
        detail: String::new(),
    };
    if let Some(script) = init {
        if let Err(e) = run_init_script(script) {
            outcome.detail = format!("init script: {e}");
            return outcome;
        }
    }
    let mut vars: BTreeMap<String, Value> = BTreeMap::new();
    for (i, step) in tc.steps.iter().enumerate() {
        let plan = match step.template.instantiate(base_url, &vars) {
            Ok(p) => p,
            Err(e) => {
                outcome.detail = format!("step '{}': {e}", step.alias);
                return outcome;
            }
        };
        let exchange = match engine.send(&plan) {
            Ok(x) => x,
            Err(e) => {
                outcome.detail = format!("step '{}': {e}", step.alias);
                return outcome;
            }
        };
        let status = exchange.status;
        outcome.exchanges.push(StepRecord {
            alias: step.alias.clone(),
            exchange,
        });
        if i + 1 == tc.steps.len() {
            outcome.final_status = Some(status);
            outcome.verdict = classify(tc.kind, status);
            outcome.detail = match outcome.verdict {
                Verdict::Passed => String::new(),
                Verdict::ServerError => format!("{} answered {status}", step.operation_id),
                _ => format!(
                    "expected {}xx from {}, got {status}",
                    tc.kind.expected_class(),
                    step.operation_id
                ),
            };
            return outcome;
        }
        if status / 100 != 2 {
            outcome.detail = format!("prerequisite '{}' answered {status}", step.alias);
            return outcome;
        }
        let last = &outcome.exchanges[outcome.exchanges.len() - 1].exchange;
        for x in &step.extractions {
            match x.extract(last) {
                Some(v) => {
                    vars.insert(x.variable.clone(), v);
                }
                None => {
                    outcome.detail = format!("step '{}': response has no value at '{}'", step.alias, x.source);
                    return outcome;
                }
            }
        }
    }
    outcome.detail = "test case has no steps".into();
    outcome
}

/// Test cases of one operation under test, in execution order.
#[derive(Debug, Clone, PartialEq)]
pub struct OperationSuite {
    pub operation_id: String,
    pub cases: Vec<TestCase>,
}

impl OperationSuite {
    /// Orders cases happy first, then structural, then functional.
    pub fn new(operation_id: impl Into<String>, mut cases: Vec<TestCase>) -> Self {
        cases.sort_by_key(|c| c.kind);
        Self {
            operation_id: operation_id.into(),
            cases,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteOutcomes {
    pub operation_id: String,
    pub outcomes: Vec<TestOutcome>,
}

/// Identity of a failing request for counting server errors.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ServerErrorSignature {
    pub method: HttpMethod,
    pub path_template: String,
    /// Sorted trace keys the negative case overrode; empty otherwise.
    pub override_keys: Vec<String>,
}

impl fmt::Display for ServerErrorSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.method, self.path_template)?;
        if !self.override_keys.is_empty() {
            write!(f, " [{}]", self.override_keys.join(", "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Generation,
    Execution,
}

/// One 5xx response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerErrorRecord {
    pub phase: Phase,
    /// Operation under test whose generation or suite saw the error.
    pub operation_id: String,
    pub test_case: Option<String>,
    pub step_alias: String,
    pub status: u16,
    pub signature: ServerErrorSignature,
}

/// 5xx responses among the outcomes. The override keys count only for the
/// step they were applied to, the final one.
pub fn server_errors_of(suite: &OperationSuite, outcomes: &SuiteOutcomes) -> Vec<ServerErrorRecord> {
    let mut out = Vec::new();
    for (case, outcome) in suite.cases.iter().zip(&outcomes.outcomes) {
        for rec in &outcome.exchanges {
            if rec.exchange.status < 500 {
                continue;
            }
            let Some(pos) = case.steps.iter().position(|s| s.alias == rec.alias) else {
                continue;
            };
            let step = &case.steps[pos];
            let override_keys = if pos + 1 == case.steps.len() {
                case.overrides.iter().map(ToString::to_string).collect()
            } else {
                Vec::new()
            };
            out.push(ServerErrorRecord {
                phase: Phase::Execution,
                operation_id: suite.operation_id.clone(),
                test_case: Some(case.name.clone()),
                step_alias: rec.alias.clone(),
                status: rec.exchange.status,
                signature: ServerErrorSignature {
                    method: step.template.method,
                    path_template: step.path_template.clone(),
                    override_keys,
                },
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExecutionResult {
    pub suites: Vec<SuiteOutcomes>,
    pub server_errors: Vec<ServerErrorRecord>,
}

/// Runs every suite strictly one case at a time, in the given order.
pub fn run_all(suites: &[OperationSuite], engine: &RequestEngine, base_url: &str, init: Option<&EnvInitScript>) -> ExecutionResult {
    let mut result = ExecutionResult::default();
    for suite in suites {
        let outcomes = SuiteOutcomes {
            operation_id: suite.operation_id.clone(),
            outcomes: suite
                .cases
                .iter()
                .map(|tc| {
                    let o = run_test_case(tc, engine, base_url, init);
                    tracing::info!(operation = %suite.operation_id, case = %tc.name, verdict = %o.verdict, "test case finished");
                    o
                })
                .collect(),
        };
        result.server_errors.extend(server_errors_of(suite, &outcomes));
        result.suites.push(outcomes);
    }
    result
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperationGeneration {
    pub operation_id: String,
    pub covered: bool,
    pub test_cases: usize,
    /// Why no happy path was found.
    pub error: Option<String>,
    /// Scenarios that were dropped or could not get invalid values.
    pub notes: Vec<String>,
}

/// What the generation phase produced, as needed for the metrics.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GenerationSummary {
    pub operations: Vec<OperationGeneration>,
    pub server_errors: Vec<ServerErrorRecord>,
    pub ledger: TokenLedger,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metrics {
    pub operations_covered: usize,
    pub server_errors: usize,
    pub test_case_count: usize,
    pub total_tokens: u64,
    /// Exact quotient as `numerator/denominator`; null without test cases.
    pub tokens_per_test_case_exact: Option<String>,
    /// Rounded half up to two decimals.
    pub tokens_per_test_case: Option<String>,
    pub verdicts: BTreeMap<Verdict, usize>,
}

/// Renders a non-negative ratio with two decimals, rounding half up.
pub fn format_ratio_2dp(r: &Ratio<u64>) -> String {
    let (n, d) = (u128::from(*r.numer()), u128::from(*r.denom()));
    let hundredths = (n * 200 + d) / (2 * d);
    format!("{}.{:02}", hundredths / 100, hundredths % 100)
}

/// Distinct server-error signatures over both phases.
pub fn distinct_server_errors<'a>(records: impl IntoIterator<Item = &'a ServerErrorRecord>) -> BTreeSet<&'a ServerErrorSignature> {
    records.into_iter().map(|r| &r.signature).collect()
}

pub fn compute_metrics(generation: &GenerationSummary, execution: Option<&ExecutionResult>) -> Metrics {
    let test_case_count = match execution {
        Some(e) => e.suites.iter().map(|s| s.outcomes.len()).sum(),
        None => generation.operations.iter().map(|o| o.test_cases).sum(),
    };
    let mut verdicts: BTreeMap<Verdict, usize> = BTreeMap::new();
    if let Some(e) = execution {
        for v in Verdict::ALL {
            verdicts.insert(v, 0);
        }
        for o in e.suites.iter().flat_map(|s| &s.outcomes) {
            *verdicts.entry(o.verdict).or_default() += 1;
        }
    }
    let exec_errors = execution.map(|e| e.server_errors.as_slice()).unwrap_or_default();
    let per_case = tokens_per_test_case(&generation.ledger, test_case_count as u64).ok();
    Metrics {
        operations_covered: generation.operations.iter().filter(|o| o.covered).count(),
        server_errors: distinct_server_errors(generation.server_errors.iter().chain(exec_errors)).len(),
        test_case_count,
        total_tokens: generation.ledger.total_tokens(),
        tokens_per_test_case_exact: per_case.map(|r| format!("{}/{}", r.numer(), r.denom())),
        tokens_per_test_case: per_case.as_ref().map(format_ratio_2dp),
        verdicts,
    }
}
