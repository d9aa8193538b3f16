use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{HappyPathConfig, HappyPathError, OperationPlan, PlanStep};
use crate::llm::{ChatMessage, LlmGateway, Purpose, StructuredRequest, ValidatedError};
use crate::oas::{operation_summary, ApiSpec};
use crate::trace::is_valid_alias;

/// A user-fixed step: an operation id, optionally with its own alias.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OverrideStep {
    Operation(String),
    Aliased { alias: String, operation_id: String },
}

/// Trace alias derived from an operation id.
pub fn alias_for(operation_id: &str) -> String {
    let s: String = operation_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
        .collect();
    if s.is_empty() {
        "step".into()
    } else {
        s
    }
}

const PLAN_SYSTEM: &str = "You plan call sequences for automated REST API testing. \
Given an operation under test and the operations the API offers, list the operations that must be \
called, in order, so that a valid request to the operation under test can be built and succeeds. \
Earlier steps typically create the resources whose identifiers later steps need. Include only the \
operations that are necessary. The last step must be the operation under test. Also write a short \
usage guide that explains which values flow from one step to the next and anything else needed to \
make each request succeed.";

const GUIDE_SYSTEM: &str = "You write usage guides for automated REST API testing. The call \
sequence below is fixed. Explain which values flow from one step to the next and anything else \
needed to make each request succeed.";

#[derive(Debug)]
enum PlanProblem {
    TooLong { len: usize, max: usize },
    Invalid(String),
}

impl fmt::Display for PlanProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanProblem::TooLong { len, max } => {
                write!(f, "the plan has {len} steps but at most {max} are allowed")
            }
            PlanProblem::Invalid(m) => f.write_str(m),
        }
    }
}

impl From<PlanProblem> for HappyPathError {
    fn from(p: PlanProblem) -> Self {
        match p {
            PlanProblem::TooLong { len, max } => HappyPathError::SequenceTooLong { len, max },
            PlanProblem::Invalid(m) => HappyPathError::PlanInvalid(m),
        }
    }
}

/// Plans the call sequence for `target`. An override is validated and used
/// verbatim; the model then only writes the usage guide.
pub fn plan_sequence(
    gateway: &mut LlmGateway,
    spec: &ApiSpec,
    target: &str,
    guidance: Option<&str>,
    override_steps: Option<&[OverrideStep]>,
    cfg: &HappyPathConfig,
) -> Result<OperationPlan, HappyPathError> {
    let target_op = spec
        .operation(target)
        .ok_or_else(|| HappyPathError::UnknownOperation(target.to_string()))?;

    if let Some(steps) = override_steps {
        let steps = validate_override(spec, target, steps, cfg.max_sequence_len)?;
        let mut user = String::from("Call sequence (operation under test last):\n");
        for (i, s) in steps.iter().enumerate() {
            let op = spec.operation(&s.operation_id).expect("validated");
            user.push_str(&format!(
                "\nStep {} (alias {}):\n{}\n",
                i + 1,
                s.alias,
                operation_summary(op, cfg.summary_budget)
            ));
        }
        push_guidance(&mut user, guidance);
        let req = StructuredRequest {
            messages: vec![ChatMessage::system(GUIDE_SYSTEM), ChatMessage::user(user)],
            output_schema: json!({
                "type": "object",
                "required": ["usage_guide"],
                "properties": {"usage_guide": {"type": "string"}}
            }),
            purpose: Purpose::Plan,
        };
        let reply = gateway.complete_structured(&req)?;
        return Ok(OperationPlan {
            target_operation_id: target.to_string(),
            steps,
            usage_guide: reply.value["usage_guide"].as_str().unwrap_or_default().to_string(),
        });
    }

    let mut user = format!(
        "Operation under test: {}\n\n{}\n\nAll operations of the API:\n",
        target_op.id,
        operation_summary(target_op, cfg.summary_budget)
    );
    for op in &spec.operations {
        user.push_str(&format!("\n{}\n", operation_summary(op, cfg.summary_budget)));
    }
    user.push_str(&format!(
        "\nList at most {} operation ids in call order in \"steps\"; the last one must be \"{}\".",
        cfg.max_sequence_len, target_op.id
    ));
    push_guidance(&mut user, guidance);

    let req = StructuredRequest {
        messages: vec![ChatMessage::system(PLAN_SYSTEM), ChatMessage::user(user)],
        output_schema: json!({
            "type": "object",
            "required": ["steps", "usage_guide"],
            "properties": {
                "steps": {"type": "array", "minItems": 1, "items": {"type": "string"}},
                "usage_guide": {"type": "string"}
            }
        }),
        purpose: Purpose::Plan,
    };
    let max = cfg.max_sequence_len;
    let result = gateway.complete_validated(&req, |v: &Value| {
        let ids: Vec<OverrideStep> = v["steps"]
            .as_array()
            .into_iter()
            .flatten()
            .filter_map(Value::as_str)
            .map(|s| OverrideStep::Operation(s.to_string()))
            .collect();
        let guide = v["usage_guide"].as_str().unwrap_or_default().trim().to_string();
        validate_steps(spec, target, &ids, max).map(|steps| (steps, guide))
    });
    let (steps, usage_guide) = match result {
        Ok(c) => c.value,
        Err(ValidatedError::Gateway(g)) => return Err(g.into()),
        Err(ValidatedError::Rejected { reason, .. }) => return Err(reason.into()),
    };
    tracing::info!(target = %target, steps = steps.len(), "planned sequence");
    Ok(OperationPlan {
        target_operation_id: target.to_string(),
        steps,
        usage_guide,
    })
}

fn push_guidance(user: &mut String, guidance: Option<&str>) {
    if let Some(g) = guidance.map(str::trim).filter(|g| !g.is_empty()) {
        user.push_str("\n\nAdditional information from the user (for example credentials or existing identifiers):\n");
        user.push_str(g);
    }
}

fn validate_override(
    spec: &ApiSpec,
    target: &str,
    steps: &[OverrideStep],
    max: usize,
) -> Result<Vec<PlanStep>, HappyPathError> {
    validate_steps(spec, target, steps, max).map_err(Into::into)
}

fn validate_steps(
    spec: &ApiSpec,
    target: &str,
    steps: &[OverrideStep],
    max: usize,
) -> Result<Vec<PlanStep>, PlanProblem> {
    if steps.is_empty() {
        return Err(PlanProblem::Invalid("the plan has no steps".into()));
    }
    if steps.len() > max {
        return Err(PlanProblem::TooLong { len: steps.len(), max });
    }
    let mut used = BTreeSet::new();
    let mut out = Vec::with_capacity(steps.len());
    for s in steps {
        let (alias, id) = match s {
            OverrideStep::Operation(id) => {
                let base = alias_for(id);
                let mut alias = base.clone();
                let mut n = 2;
                while used.contains(&alias) {
                    alias = format!("{base}_{n}");
                    n += 1;
                }
                (alias, id)
            }
            OverrideStep::Aliased { alias, operation_id } => {
                if !is_valid_alias(alias) {
                    return Err(PlanProblem::Invalid(format!("'{alias}' is not a valid step alias")));
                }
                if used.contains(alias) {
                    return Err(PlanProblem::Invalid(format!("step alias '{alias}' is used twice")));
                }
                (alias.clone(), operation_id)
            }
        };
        if spec.operation(id).is_none() {
            return Err(PlanProblem::Invalid(format!("'{id}' is not an operation of this API")));
        }
        used.insert(alias.clone());
        out.push(PlanStep {
            alias,
            operation_id: id.clone(),
        });
    }
    let last = &out.last().expect("non-empty").operation_id;
    if last != target {
        return Err(PlanProblem::Invalid(format!(
            "the last step is '{last}' but must be the operation under test '{target}'"
        )));
    }
    Ok(out)
}
