//! The generate / run / all commands over a workspace directory.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::builder::{
    build_happy_case, build_negative_case, import_collection, BuilderError, CollectionError, PostmanEmitter,
    SuiteEmitter, SuiteMeta, TestCase,
};
use crate::engine::{run_init_script, EngineConfig, EngineError, EnvInitScript, RequestEngine};
use crate::happy_path::{build_happy_path, HappyPath, HappyPathConfig, HappyPathContext, HappyPathError, OverrideStep};
use crate::llm::{GatewayError, LlmGateway, OpenAiProvider, ProviderConfig, ScriptedProvider};
use crate::negative::{generate_invalid_values, generate_scenarios, NegativeError, ScenarioConfig, TestKind};
use crate::oas::{constraint_catalog, load_document, parse_spec, ApiSpec, DocumentFormat, OasError};
use crate::report::{
    directory_names, load_report, read_text, write_operation, write_outcomes, write_report, OperationArtifacts,
    OperationEntry, OverrideRecord, PlanRecord, ReportError, RunReport, ScenarioRecord,
};
use crate::runner::{
    run_all, GenerationSummary, OperationGeneration, OperationSuite, Phase, ServerErrorRecord, ServerErrorSignature,
    Verdict,
};

/// Everything the commands need. Secrets are not part of it: the provider
/// config only names the environment variable holding the key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Path or http(s) URL of the OpenAPI document.
    pub spec: String,
    /// Defaults to the first server of the document.
    pub base_url: Option<String>,
    /// Operation ids or glob patterns; empty selects every operation.
    pub operations: Vec<String>,
    pub kinds: BTreeSet<TestKind>,
    /// Shell command run before each happy-path build and each test case.
    pub init_script: Option<String>,
    pub init_timeout_secs: u64,
    pub guidance: Option<String>,
    /// Fixed step sequences per target operation.
    pub sequences: BTreeMap<String, Vec<OverrideStep>>,
    pub provider: ProviderConfig,
    /// Scripted replies instead of a live provider.
    pub replay: Option<PathBuf>,
    pub happy_path: HappyPathConfig,
    pub scenarios: ScenarioConfig,
    #[serde(skip)]
    pub output_dir: PathBuf,
    pub verify_tls: bool,
    pub request_timeout_secs: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            spec: String::new(),
            base_url: None,
            operations: Vec::new(),
            kinds: TestKind::ALL.into_iter().collect(),
            init_script: None,
            init_timeout_secs: EnvInitScript::DEFAULT_TIMEOUT_SECS,
            guidance: None,
            sequences: BTreeMap::new(),
            provider: ProviderConfig::default(),
            replay: None,
            happy_path: HappyPathConfig::default(),
            scenarios: ScenarioConfig::default(),
            output_dir: PathBuf::from("happypath-out"),
            verify_tls: true,
            request_timeout_secs: crate::engine::DEFAULT_REQUEST_TIMEOUT_SECS,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        if self.kinds.is_empty() {
            return bad("at least one test kind is required");
        }
        if self.happy_path.max_sequence_len == 0 {
            return bad("max sequence length must be positive");
        }
        if self.happy_path.summary_budget == 0 || self.scenarios.summary_budget == 0 {
            return bad("summary budget must be positive");
        }
        if self.happy_path.pair_cap == 0 {
            return bad("pair cap must be positive");
        }
        if self.kinds.contains(&TestKind::Structural) && self.scenarios.max_structural == 0 {
            return bad("structural scenario budget must be positive");
        }
        if self.kinds.contains(&TestKind::Functional) && self.scenarios.max_functional == 0 {
            return bad("functional scenario budget must be positive");
        }
        if self.init_timeout_secs == 0 || self.request_timeout_secs == 0 {
            return bad("timeouts must be positive");
        }
        for p in &self.operations {
            glob::Pattern::new(p).map_err(|e| PipelineError::Config(format!("operation filter '{p}': {e}")))?;
        }
        Ok(())
    }

    fn init(&self) -> Option<EnvInitScript> {
        self.init_script.as_ref().map(|c| EnvInitScript {
            timeout_secs: self.init_timeout_secs,
            ..EnvInitScript::new(c.clone())
        })
    }

    fn engine(&self) -> Result<RequestEngine, PipelineError> {
        Ok(RequestEngine::new(EngineConfig {
            timeout_secs: self.request_timeout_secs,
            verify_tls: self.verify_tls,
        })?)
    }

    /// The echo stored in the report; the output directory is left out so
    /// identical runs into different directories match.
    pub fn echo(&self) -> Value {
        serde_json::to_value(self).unwrap_or(Value::Null)
    }

    fn selects(&self, operation_id: &str) -> bool {
        self.operations.is_empty()
            || self
                .operations
                .iter()
                .any(|p| glob::Pattern::new(p).is_ok_and(|g| g.matches(operation_id)))
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Spec(#[from] OasError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("{path}: {source}")]
    Collection {
        path: PathBuf,
        #[source]
        source: CollectionError,
    },
    #[error("operation '{operation}': {source}")]
    Builder {
        operation: String,
        #[source]
        source: BuilderError,
    },
}

/// Exit status of `run` and `all`: 0 when every case passed and no server
/// error was seen, 1 otherwise.
pub fn exit_code(report: &RunReport) -> i32 {
    let all_passed = report
        .execution
        .iter()
        .flat_map(|e| &e.suites)
        .flat_map(|s| &s.cases)
        .all(|c| c.verdict == Verdict::Passed);
    if all_passed && report.metrics.server_errors == 0 {
        0
    } else {
        1
    }
}

pub fn load_spec(source: &str) -> Result<ApiSpec, PipelineError> {
    let text = load_document(source)?;
    Ok(parse_spec(&text, DocumentFormat::Auto)?)
}

/// Gateway over the replay file when one is configured, else the live
/// provider.
pub fn make_gateway(cfg: &PipelineConfig) -> Result<LlmGateway, PipelineError> {
    let max = cfg.provider.max_reprompts;
    Ok(match &cfg.replay {
        Some(path) => LlmGateway::new(Box::new(ScriptedProvider::from_file(path)?), max),
        None => LlmGateway::new(Box::new(OpenAiProvider::from_config(&cfg.provider)?), max),
    })
}

fn gateway_fatal(e: &GatewayError) -> bool {
    !matches!(e, GatewayError::MalformedAfterRetries { .. })
}

fn base_url(cfg: &PipelineConfig, spec: &ApiSpec) -> Result<String, PipelineError> {
    cfg.base_url
        .clone()
        .or_else(|| spec.servers.first().cloned())
        .ok_or_else(|| PipelineError::Config("no base URL given and the document lists no servers".into()))
}

struct Generated {
    entry: OperationEntry,
    summary: OperationGeneration,
}

/// Scenarios and negative cases for one covered operation.
fn negative_cases(
    cfg: &PipelineConfig,
    spec: &ApiSpec,
    gateway: &mut LlmGateway,
    happy: &HappyPath,
    notes: &mut Vec<String>,
) -> Result<(Vec<ScenarioRecord>, Vec<TestCase>), PipelineError> {
    let target = &happy.plan.target_operation_id;
    let op = spec.operation(target).expect("planned target exists");
    let catalog = constraint_catalog(op);
    let kinds: Vec<TestKind> = cfg.kinds.iter().copied().collect();
    let scenarios = match generate_scenarios(gateway, op, happy, &catalog, &kinds, &cfg.scenarios) {
        Ok(s) => s,
        Err(NegativeError::Gateway(g)) if gateway_fatal(&g) => return Err(g.into()),
        Err(e) => {
            notes.push(format!("scenarios: {e}"));
            Vec::new()
        }
    };
    let mut records = Vec::new();
    let mut cases = Vec::new();
    for scenario in scenarios {
        match generate_invalid_values(gateway, op, &scenario, happy, &catalog) {
            Ok(set) => {
                let case = build_negative_case(spec, &happy.plan, &happy.trace, &scenario, &set).map_err(|source| {
                    PipelineError::Builder {
                        operation: target.clone(),
                        source,
                    }
                })?;
                cases.push(case);
                records.push(ScenarioRecord {
                    scenario,
                    overrides: Some(OverrideRecord::from_set(&set)),
                    error: None,
                });
            }
            Err(NegativeError::Gateway(g)) if gateway_fatal(&g) => return Err(g.into()),
            Err(e) => {
                notes.push(format!("{}: {e}", scenario.name));
                records.push(ScenarioRecord {
                    scenario,
                    overrides: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    Ok((records, cases))
}

#[allow(clippy::too_many_arguments)]
fn generate_operation(
    cfg: &PipelineConfig,
    spec: &ApiSpec,
    gateway: &mut LlmGateway,
    engine: &RequestEngine,
    base: &str,
    operation_id: &str,
    directory: &str,
    server_errors: &mut Vec<ServerErrorRecord>,
) -> Result<Generated, PipelineError> {
    let uncovered = |error: String| Generated {
        entry: OperationEntry {
            operation_id: operation_id.to_string(),
            covered: false,
            directory: None,
            collection: None,
            files: Vec::new(),
        },
        summary: OperationGeneration {
            operation_id: operation_id.to_string(),
            covered: false,
            test_cases: 0,
            error: Some(error),
            notes: Vec::new(),
        },
    };
    if let Some(script) = cfg.init() {
        if let Err(e) = run_init_script(&script) {
            return Ok(uncovered(format!("init script: {e}")));
        }
    }
    let mut ctx = HappyPathContext {
        spec,
        gateway,
        engine,
        base_url: base,
        config: &cfg.happy_path,
        guidance: cfg.guidance.as_deref(),
    };
    let happy = match build_happy_path(&mut ctx, operation_id, cfg.sequences.get(operation_id).map(Vec::as_slice)) {
        Ok(h) => h,
        Err(failure) => {
            if let Some(HappyPathError::Gateway(g)) = &failure.kind {
                if gateway_fatal(g) {
                    return Err(g.clone().into());
                }
            }
            let step_op = failure.step_operation_id.as_deref().and_then(|id| spec.operation(id));
            for x in failure.server_errors() {
                let path_template = step_op.map_or_else(|| x.exchange.request.url.clone(), |o| o.path_template.clone());
                server_errors.push(ServerErrorRecord {
                    phase: Phase::Generation,
                    operation_id: operation_id.to_string(),
                    test_case: None,
                    step_alias: x.alias.clone(),
                    status: x.exchange.status,
                    signature: ServerErrorSignature {
                        method: x.exchange.request.method,
                        path_template,
                        override_keys: Vec::new(),
                    },
                });
            }
            return Ok(uncovered(failure.to_string()));
        }
    };

    let mut notes = Vec::new();
    let mut cases = Vec::new();
    if cfg.kinds.contains(&TestKind::HappyPath) {
        cases.push(build_happy_case(spec, &happy.plan, &happy.trace).map_err(|source| PipelineError::Builder {
            operation: operation_id.to_string(),
            source,
        })?);
    }
    let (scenarios, negatives) = negative_cases(cfg, spec, gateway, &happy, &mut notes)?;
    cases.extend(negatives);
    let suite = OperationSuite::new(operation_id, cases);

    let emitter = PostmanEmitter;
    let collection = if suite.cases.is_empty() {
        None
    } else {
        let meta = SuiteMeta {
            name: operation_id.to_string(),
            base_url: base.to_string(),
        };
        let text = emitter.emit(&suite.cases, &meta).map_err(|source| PipelineError::Builder {
            operation: operation_id.to_string(),
            source,
        })?;
        Some((emitter.file_name(operation_id), text))
    };
    let artifacts = OperationArtifacts {
        operation_id: operation_id.to_string(),
        directory: directory.to_string(),
        plan: PlanRecord {
            plan: happy.plan.clone(),
            attempts_per_step: happy.attempts_per_step.clone(),
        },
        trace: happy.trace.to_json(),
        scenarios,
        collection,
    };
    let entry = write_operation(&cfg.output_dir, &artifacts)?;
    Ok(Generated {
        entry,
        summary: OperationGeneration {
            operation_id: operation_id.to_string(),
            covered: true,
            test_cases: suite.cases.len(),
            error: None,
            notes,
        },
    })
}

/// Generation phase: a happy path, scenarios and a collection per selected
/// operation, written to the workspace. Nothing is executed afterwards.
pub fn cmd_generate_with(cfg: &PipelineConfig, gateway: &mut LlmGateway) -> Result<RunReport, PipelineError> {
    cfg.validate()?;
    let spec = load_spec(&cfg.spec)?;
    let base = base_url(cfg, &spec)?;
    let engine = cfg.engine()?;
    std::fs::create_dir_all(&cfg.output_dir).map_err(|source| ReportError::Io {
        path: cfg.output_dir.clone(),
        source,
    })?;

    let selected: Vec<&str> = spec.operations.iter().map(|o| o.id.as_str()).filter(|id| cfg.selects(id)).collect();
    let dirs = directory_names(selected.iter().copied());
    let mut generation = GenerationSummary::default();
    let mut entries = Vec::new();
    for (id, dir) in selected.iter().zip(&dirs) {
        tracing::info!(operation = id, "generating");
        let g = generate_operation(cfg, &spec, gateway, &engine, &base, id, dir, &mut generation.server_errors)?;
        entries.push(g.entry);
        generation.operations.push(g.summary);
    }
    generation.ledger = gateway.ledger().clone();
    let report = RunReport::new(cfg.echo(), entries, generation, None);
    write_report(&cfg.output_dir, &report)?;
    Ok(report)
}

pub fn cmd_generate(cfg: &PipelineConfig) -> Result<RunReport, PipelineError> {
    cfg.validate()?;
    let mut gateway = make_gateway(cfg)?;
    cmd_generate_with(cfg, &mut gateway)
}

/// Re-executes the collections of a workspace. No LLM is involved: the
/// suites are read back from disk. The base URL of the configuration, when
/// set, replaces the one stored in the collections.
pub fn cmd_run(workspace: &Path, cfg: &PipelineConfig) -> Result<RunReport, PipelineError> {
    let previous = load_report(workspace)?;
    let engine = cfg.engine()?;
    let init = cfg.init();
    let mut entries = previous.operations.clone();
    let mut suites = Vec::new();
    let mut bases = Vec::new();
    for entry in &entries {
        let Some(rel) = &entry.collection else { continue };
        let path = workspace.join(rel);
        let text = read_text(&path)?;
        let cases = import_collection(&text).map_err(|source| PipelineError::Collection {
            path: path.clone(),
            source,
        })?;
        let stored_base = serde_json::from_str::<Value>(&text)
            .ok()
            .and_then(|d| {
                d["variable"]
                    .as_array()?
                    .iter()
                    .find(|v| v["key"] == crate::builder::BASE_URL_VARIABLE)
                    .and_then(|v| v["value"].as_str().map(str::to_string))
            })
            .unwrap_or_default();
        bases.push(cfg.base_url.clone().unwrap_or(stored_base));
        suites.push(OperationSuite::new(entry.operation_id.clone(), cases));
    }
    let mut execution = crate::runner::ExecutionResult::default();
    for (suite, base) in suites.iter().zip(&bases) {
        let part = run_all(std::slice::from_ref(suite), &engine, base, init.as_ref());
        execution.suites.extend(part.suites);
        execution.server_errors.extend(part.server_errors);
    }
    for outcomes in &execution.suites {
        if let Some(entry) = entries.iter_mut().find(|e| e.operation_id == outcomes.operation_id) {
            write_outcomes(workspace, entry, outcomes)?;
        }
    }
    let report = RunReport::new(previous.config.clone(), entries, previous.generation.clone(), Some(&execution));
    write_report(workspace, &report)?;
    Ok(report)
}

/// Generation followed by execution of the freshly written workspace.
pub fn cmd_all_with(cfg: &PipelineConfig, gateway: &mut LlmGateway) -> Result<RunReport, PipelineError> {
    cmd_generate_with(cfg, gateway)?;
    cmd_run(&cfg.output_dir, cfg)
}

pub fn cmd_all(cfg: &PipelineConfig) -> Result<RunReport, PipelineError> {
    cfg.validate()?;
    let mut gateway = make_gateway(cfg)?;
    cmd_all_with(cfg, &mut gateway)
}

#[cfg(test)]
mod tests;
