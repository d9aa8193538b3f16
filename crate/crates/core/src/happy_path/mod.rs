//! Builds one validated happy path per operation under test: plan the
//! dependency sequence, generate values step by step with 4xx feedback, and
//! record every successful exchange in the execution trace.

mod build;
mod plan;
mod values;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{EngineError, HttpExchange};
use crate::llm::GatewayError;
use crate::trace::{ExecutionTrace, TraceError, TraceKey, TraceValue};

pub use build::{build_happy_path, HappyPathContext};
pub use plan::{alias_for, plan_sequence, OverrideStep};
pub use values::{generate_step_values, render_trace_for_prompt, PriorError, ValueRequest};

pub const DEFAULT_MAX_RETRIES_PER_STEP: u32 = 3;
pub const DEFAULT_MAX_SEQUENCE_LEN: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStep {
    pub alias: String,
    pub operation_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperationPlan {
    pub target_operation_id: String,
    pub steps: Vec<PlanStep>,
    pub usage_guide: String,
}

impl OperationPlan {
    pub fn final_step(&self) -> &PlanStep {
        self.steps.last().expect("plans have at least one step")
    }

    pub fn step(&self, alias: &str) -> Option<&PlanStep> {
        self.steps.iter().find(|s| s.alias == alias)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueAssignment {
    pub step_alias: String,
    /// Keys are all `<alias>.request.*`.
    pub entries: Vec<(TraceKey, TraceValue)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HappyPathConfig {
    pub max_retries_per_step: u32,
    pub max_sequence_len: usize,
    /// Character budget for each operation description in prompts.
    pub summary_budget: usize,
    /// Most pairs one response may add to the trace.
    pub pair_cap: usize,
}

impl Default for HappyPathConfig {
    fn default() -> Self {
        Self {
            max_retries_per_step: DEFAULT_MAX_RETRIES_PER_STEP,
            max_sequence_len: DEFAULT_MAX_SEQUENCE_LEN,
            summary_budget: 2000,
            pair_cap: crate::trace::DEFAULT_PAIR_CAP,
        }
    }
}

/// A step exchange as recorded during construction, failed attempts included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepExchange {
    pub alias: String,
    pub attempt: u32,
    pub exchange: HttpExchange,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HappyPath {
    pub plan: OperationPlan,
    pub trace: ExecutionTrace,
    pub exchanges: Vec<StepExchange>,
    /// Requests sent per step, in plan order.
    pub attempts_per_step: Vec<u32>,
}

impl HappyPath {
    pub fn target_alias(&self) -> &str {
        &self.plan.final_step().alias
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HappyPathError {
    #[error("unknown operation '{0}'")]
    UnknownOperation(String),
    #[error("invalid plan: {0}")]
    PlanInvalid(String),
    #[error("plan has {len} steps, more than the maximum of {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("invalid value assignment: {0}")]
    AssignmentInvalid(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("step '{alias}' still answered HTTP {last_status} after {attempts} requests")]
    StepExhausted { alias: String, attempts: u32, last_status: u16 },
    #[error("step '{alias}' answered HTTP {status}")]
    ServerErrorDuringGeneration { alias: String, status: u16 },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("cannot render request: {0}")]
    Render(EngineError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// Why no happy path exists for a target. Serialized into the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HappyPathFailure {
    pub target_operation_id: String,
    /// Step that failed; `None` when planning failed.
    pub step_alias: Option<String>,
    pub step_operation_id: Option<String>,
    pub attempts: u32,
    pub error: String,
    #[serde(skip)]
    pub kind: Option<HappyPathError>,
    pub exchanges: Vec<StepExchange>,
}

impl HappyPathFailure {
    /// 5xx exchanges seen while building.
    pub fn server_errors(&self) -> impl Iterator<Item = &StepExchange> {
        self.exchanges.iter().filter(|e| e.exchange.status >= 500)
    }
}

impl std::fmt::Display for HappyPathFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.step_alias {
            Some(a) => write!(
                f,
                "no happy path for '{}': step '{a}' failed after {} requests: {}",
                self.target_operation_id, self.attempts, self.error
            ),
            None => write!(f, "no happy path for '{}': {}", self.target_operation_id, self.error),
        }
    }
}

impl std::error::Error for HappyPathFailure {}
