//! On-disk workspace: per-operation artifacts plus the top-level report.
//!
//! ```text
//! <root>/report.json
//! <root>/report.txt
//! <root>/<operation>/plan.json
//! <root>/<operation>/trace.json
//! <root>/<operation>/scenarios.json
//! <root>/<operation>/<operation>.postman_collection.json
//! <root>/<operation>/outcomes.json
//! ```

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::builder::sanitize_name;
use crate::happy_path::OperationPlan;
use crate::negative::{InvalidValueSet, TestKind, TestScenario};
use crate::runner::{
    compute_metrics, ExecutionResult, GenerationSummary, Metrics, Phase, ServerErrorRecord, SuiteOutcomes, Verdict,
};
use crate::trace::{Literal, TraceKey};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";
pub const PLAN_FILE: &str = "plan.json";
pub const TRACE_FILE: &str = "trace.json";
pub const SCENARIOS_FILE: &str = "scenarios.json";
pub const OUTCOMES_FILE: &str = "outcomes.json";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Stored form of `plan.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub plan: OperationPlan,
    pub attempts_per_step: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverrideRecord {
    pub key: TraceKey,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Value>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub absent: bool,
}

impl OverrideRecord {
    pub fn from_set(set: &InvalidValueSet) -> Vec<Self> {
        set.overrides
            .iter()
            .map(|(k, l)| OverrideRecord {
                key: k.clone(),
                value: l.as_json().cloned(),
                absent: l.is_absent(),
            })
            .collect()
    }

    pub fn literal(&self) -> Literal {
        match (&self.value, self.absent) {
            (_, true) | (None, _) => Literal::Absent,
            (Some(v), false) => Literal::Json(v.clone()),
        }
    }
}

/// One entry of `scenarios.json`: the scenario plus its invalid values, or
/// the reason none could be produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRecord {
    #[serde(flatten)]
    pub scenario: TestScenario,
    pub overrides: Option<Vec<OverrideRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Everything generated for one covered operation.
#[derive(Debug, Clone, PartialEq)]
pub struct OperationArtifacts {
    pub operation_id: String,
    pub directory: String,
    pub plan: PlanRecord,
    /// Serialized execution trace.
    pub trace: Value,
    pub scenarios: Vec<ScenarioRecord>,
    /// File name and text of the emitted collection, if the suite has cases.
    pub collection: Option<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperationEntry {
    pub operation_id: String,
    pub covered: bool,
    /// Relative to the workspace root; null when not covered.
    pub directory: Option<String>,
    pub collection: Option<String>,
    /// Every file of the operation, relative to the workspace root.
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSummary {
    pub name: String,
    pub kind: TestKind,
    pub verdict: Verdict,
    pub final_status: Option<u16>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub operation_id: String,
    pub cases: Vec<CaseSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionSummary {
    pub suites: Vec<SuiteSummary>,
    pub server_errors: Vec<ServerErrorRecord>,
}

impl ExecutionSummary {
    pub fn from_result(result: &ExecutionResult) -> Self {
        Self {
            suites: result
                .suites
                .iter()
                .map(|s| SuiteSummary {
                    operation_id: s.operation_id.clone(),
                    cases: s
                        .outcomes
                        .iter()
                        .map(|o| CaseSummary {
                            name: o.name.clone(),
                            kind: o.kind,
                            verdict: o.verdict,
                            final_status: o.final_status,
                            detail: o.detail.clone(),
                        })
                        .collect(),
                })
                .collect(),
            server_errors: result.server_errors.clone(),
        }
    }
}

/// Content of `report.json`. `timestamp` is the only field that changes
/// between identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub timestamp: String,
    pub config: Value,
    pub metrics: Metrics,
    pub operations: Vec<OperationEntry>,
    pub generation: GenerationSummary,
    pub execution: Option<ExecutionSummary>,
}

impl RunReport {
    pub fn new(
        config: Value,
        operations: Vec<OperationEntry>,
        generation: GenerationSummary,
        execution: Option<&ExecutionResult>,
    ) -> Self {
        Self {
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            config,
            metrics: compute_metrics(&generation, execution),
            operations,
            execution: execution.map(ExecutionSummary::from_result),
            generation,
        }
    }

    /// Every server error of both phases.
    pub fn server_errors(&self) -> impl Iterator<Item = &ServerErrorRecord> {
        self.generation
            .server_errors
            .iter()
            .chain(self.execution.iter().flat_map(|e| &e.server_errors))
    }
}

/// One directory name per operation id, unique after sanitizing.
pub fn directory_names<'a>(ids: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let mut used: HashSet<String> = [REPORT_JSON, REPORT_TXT].iter().map(|s| s.to_string()).collect();
    ids.into_iter()
        .map(|id| {
            let base = match sanitize_name(id) {
                s if s.is_empty() => "operation".to_string(),
                s => s,
            };
            let mut name = base.clone();
            let mut n = 2;
            while used.contains(&name) {
                name = format!("{base}_{n}");
                n += 1;
            }
            used.insert(name.clone());
            name
        })
        .collect()
}

pub fn to_json_text<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("report types serialize");
    text.push('\n');
    text
}

fn write_file(path: &Path, text: &str) -> Result<(), ReportError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

/// Writes the generation artifacts of one operation and returns its entry
/// for the report.
pub fn write_operation(root: &Path, art: &OperationArtifacts) -> Result<OperationEntry, ReportError> {
    let dir = root.join(&art.directory);
    let mut files = Vec::new();
    let mut put = |name: &str, text: &str| -> Result<(), ReportError> {
        write_file(&dir.join(name), text)?;
        files.push(format!("{}/{name}", art.directory));
        Ok(())
    };
    put(PLAN_FILE, &to_json_text(&art.plan))?;
    put(TRACE_FILE, &to_json_text(&art.trace))?;
    put(SCENARIOS_FILE, &to_json_text(&art.scenarios))?;
    if let Some((name, text)) = &art.collection {
        put(name, text)?;
    }
    Ok(OperationEntry {
        operation_id: art.operation_id.clone(),
        covered: true,
        directory: Some(art.directory.clone()),
        collection: art.collection.as_ref().map(|(n, _)| format!("{}/{n}", art.directory)),
        files,
    })
}

/// Writes `outcomes.json` next to the collection and records it.
pub fn write_outcomes(root: &Path, entry: &mut OperationEntry, outcomes: &SuiteOutcomes) -> Result<(), ReportError> {
    let dir = entry.directory.clone().ok_or_else(|| ReportError::Corrupt {
        path: root.to_path_buf(),
        reason: format!("operation '{}' has no directory", entry.operation_id),
    })?;
    write_file(&root.join(&dir).join(OUTCOMES_FILE), &to_json_text(outcomes))?;
    let rel = format!("{dir}/{OUTCOMES_FILE}");
    if !entry.files.contains(&rel) {
        entry.files.push(rel);
    }
    Ok(())
}

/// Writes `report.json` and `report.txt`.
pub fn write_report(root: &Path, report: &RunReport) -> Result<Vec<PathBuf>, ReportError> {
    let json_path = root.join(REPORT_JSON);
    let txt_path = root.join(REPORT_TXT);
    write_file(&json_path, &to_json_text(report))?;
    write_file(&txt_path, &render_text(report))?;
    Ok(vec![json_path, txt_path])
}

/// Writes the whole workspace in one go and returns the files written.
pub fn write_workspace(
    root: &Path,
    artifacts: &[OperationArtifacts],
    outcomes: &[SuiteOutcomes],
    report: &mut RunReport,
) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(root).map_err(io_err(root))?;
    let mut written = Vec::new();
    for art in artifacts {
        let mut entry = write_operation(root, art)?;
        if let Some(o) = outcomes.iter().find(|o| o.operation_id == art.operation_id) {
            write_outcomes(root, &mut entry, o)?;
        }
        written.extend(entry.files.iter().map(|f| root.join(f)));
        match report.operations.iter_mut().find(|e| e.operation_id == entry.operation_id) {
            Some(e) => *e = entry,
            None => report.operations.push(entry),
        }
    }
    written.extend(write_report(root, report)?);
    Ok(written)
}

pub fn load_report(root: &Path) -> Result<RunReport, ReportError> {
    let path = root.join(REPORT_JSON);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| ReportError::Corrupt {
        path,
        reason: e.to_string(),
    })
}

pub fn read_text(path: &Path) -> Result<String, ReportError> {
    fs::read_to_string(path).map_err(io_err(path))
}

fn signature_line(r: &ServerErrorRecord) -> String {
    let phase = match r.phase {
        Phase::Generation => "generation",
        Phase::Execution => "execution",
    };
    let case = r.test_case.as_deref().map(|c| format!(" / {c}")).unwrap_or_default();
    format!("[{phase}] {}{case}: {} -> {}", r.operation_id, r.signature, r.status)
}

/// Human-readable summary. Server errors come first.
pub fn render_text(report: &RunReport) -> String {
    let m = &report.metrics;
    let mut out = String::new();
    let errors: Vec<&ServerErrorRecord> = report.server_errors().collect();
    let _ = writeln!(out, "== SERVER ERRORS ({} distinct) ==", m.server_errors);
    if errors.is_empty() {
        out.push_str("none\n");
    }
    for r in &errors {
        let _ = writeln!(out, "{}", signature_line(r));
    }

    out.push_str("\n== METRICS ==\n");
    let _ = writeln!(out, "operations covered (#OC): {}", m.operations_covered);
    let _ = writeln!(out, "server errors (#SE):      {}", m.server_errors);
    let _ = writeln!(out, "test cases (#TC):         {}", m.test_case_count);
    let _ = writeln!(out, "LLM tokens:               {}", m.total_tokens);
    match (&m.tokens_per_test_case, &m.tokens_per_test_case_exact) {
        (Some(r), Some(e)) => {
            let _ = writeln!(out, "tokens per test case:     {r} ({e})");
        }
        _ => out.push_str("tokens per test case:     n/a\n"),
    }
    if !m.verdicts.is_empty() {
        let parts: Vec<String> = m.verdicts.iter().map(|(v, n)| format!("{v} {n}")).collect();
        let _ = writeln!(out, "verdicts:                 {}", parts.join(", "));
    }

    out.push_str("\n== OPERATIONS ==\n");
    for g in &report.generation.operations {
        if g.covered {
            let _ = writeln!(out, "{}: covered, {} test cases", g.operation_id, g.test_cases);
        } else {
            let _ = writeln!(
                out,
                "{}: not covered: {}",
                g.operation_id,
                g.error.as_deref().unwrap_or("no happy path")
            );
        }
        for n in &g.notes {
            let _ = writeln!(out, "  note: {n}");
        }
        let suite = report
            .execution
            .as_ref()
            .and_then(|e| e.suites.iter().find(|s| s.operation_id == g.operation_id));
        for c in suite.into_iter().flat_map(|s| &s.cases) {
            let status = c.final_status.map(|s| s.to_string()).unwrap_or_else(|| "-".into());
            let _ = write!(out, "  {:<12} {:<4} {}", c.verdict.as_str().to_uppercase(), status, c.name);
            if !c.detail.is_empty() {
                let _ = write!(out, "  ({})", c.detail);
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests;
