use serde_json::Value;

use super::values::ValueRequest;
use super::{
    generate_step_values, plan_sequence, HappyPath, HappyPathConfig, HappyPathError, HappyPathFailure, OverrideStep,
    PriorError, StepExchange,
};
use crate::engine::{render_request, RequestEngine};
use crate::llm::LlmGateway;
use crate::oas::ApiSpec;
use crate::trace::{
    flatten_capped, resolve, resolve_all, Direction, ExecutionTrace, Literal, MessagePayload, ResolvedValues, Section,
    TraceKey, TraceValue,
};

/// Handles shared by every happy-path build of a run.
pub struct HappyPathContext<'a> {
    pub spec: &'a ApiSpec,
    pub gateway: &'a mut LlmGateway,
    pub engine: &'a RequestEngine,
    pub base_url: &'a str,
    pub config: &'a HappyPathConfig,
    pub guidance: Option<&'a str>,
}

struct Failure {
    step: Option<(String, String)>,
    attempts: u32,
    error: HappyPathError,
}

/// Plans and executes the happy path for `target`. The caller runs the
/// environment initialization script beforehand.
pub fn build_happy_path(
    ctx: &mut HappyPathContext<'_>,
    target: &str,
    override_steps: Option<&[OverrideStep]>,
) -> Result<HappyPath, HappyPathFailure> {
    let mut exchanges = Vec::new();
    let result = build(ctx, target, override_steps, &mut exchanges);
    result.map_err(|f| {
        let failure = HappyPathFailure {
            target_operation_id: target.to_string(),
            step_alias: f.step.as_ref().map(|s| s.0.clone()),
            step_operation_id: f.step.map(|s| s.1),
            attempts: f.attempts,
            error: f.error.to_string(),
            kind: Some(f.error),
            exchanges,
        };
        tracing::warn!("{failure}");
        failure
    })
}

fn build(
    ctx: &mut HappyPathContext<'_>,
    target: &str,
    override_steps: Option<&[OverrideStep]>,
    exchanges: &mut Vec<StepExchange>,
) -> Result<HappyPath, Failure> {
    let cfg = ctx.config;
    let plan = plan_sequence(ctx.gateway, ctx.spec, target, ctx.guidance, override_steps, cfg).map_err(|error| Failure {
        step: None,
        attempts: 0,
        error,
    })?;

    let mut trace = ExecutionTrace::new();
    let mut response_headers: Vec<(TraceKey, String)> = Vec::new();
    let mut attempts_per_step = Vec::with_capacity(plan.steps.len());

    for step in &plan.steps {
        let op = ctx.spec.operation(&step.operation_id).expect("plan operations exist");
        let alias = step.alias.as_str();
        let fail = |attempts: u32, error: HappyPathError| Failure {
            step: Some((step.alias.clone(), step.operation_id.clone())),
            attempts,
            error,
        };
        let mut prior: Option<PriorError> = None;
        let mut attempts = 0u32;
        let max_attempts = cfg.max_retries_per_step + 1;
        let exchange = loop {
            if attempts >= max_attempts {
                let last_status = prior.as_ref().map_or(0, |p| p.status);
                return Err(fail(
                    attempts,
                    HappyPathError::StepExhausted {
                        alias: alias.to_string(),
                        attempts,
                        last_status,
                    },
                ));
            }
            let assignment = generate_step_values(
                ctx.gateway,
                &ValueRequest {
                    op,
                    alias,
                    usage_guide: &plan.usage_guide,
                    trace: &trace,
                    response_headers: &response_headers,
                    prior_error: prior.as_ref(),
                    guidance: ctx.guidance,
                },
                cfg,
            )
            .map_err(|e| fail(attempts, e))?;

            // Header values become trace entries the first time they are used.
            for (_, v) in &assignment.entries {
                if let TraceValue::Dependent(r) = v {
                    if !trace.contains(r) {
                        if let Some((k, text)) = response_headers.iter().find(|(k, _)| k == r) {
                            trace
                                .insert(k.clone(), TraceValue::Generated(Literal::Json(Value::String(text.clone()))))
                                .map_err(|e| fail(attempts, e.into()))?;
                        }
                    }
                }
            }

            let mut request_values = ResolvedValues::new();
            for (k, v) in &assignment.entries {
                let lit = match v {
                    TraceValue::Generated(l) => l.clone(),
                    TraceValue::Dependent(r) => resolve(&trace, r).map_err(|e| fail(attempts, e.into()))?,
                };
                request_values.insert(k.clone(), lit);
            }
            let plan_req =
                render_request(op, &request_values, ctx.base_url).map_err(|e| fail(attempts, HappyPathError::Render(e)))?;
            attempts += 1;
            let exchange = ctx
                .engine
                .send(&plan_req)
                .map_err(|e| fail(attempts, HappyPathError::Transport(e.to_string())))?;
            exchanges.push(StepExchange {
                alias: alias.to_string(),
                attempt: attempts,
                exchange: exchange.clone(),
            });
            tracing::info!(step = alias, attempt = attempts, status = exchange.status, "happy-path request");

            match exchange.status {
                200..=299 => {
                    for (k, v) in assignment.entries {
                        trace.insert(k, v).map_err(|e| fail(attempts, e.into()))?;
                    }
                    break exchange;
                }
                500..=599 => {
                    return Err(fail(
                        attempts,
                        HappyPathError::ServerErrorDuringGeneration {
                            alias: alias.to_string(),
                            status: exchange.status,
                        },
                    ))
                }
                status => {
                    prior = Some(PriorError {
                        status,
                        body: exchange.response_body.clone(),
                        previous: assignment.entries,
                    });
                }
            }
        };
        attempts_per_step.push(attempts);

        let payload = MessagePayload {
            status: Some(exchange.status),
            body: response_body_value(&exchange.response_body),
            ..MessagePayload::default()
        };
        let flat = flatten_capped(alias, Direction::Response, &payload, cfg.pair_cap).map_err(|e| fail(attempts, e.into()))?;
        if flat.truncated {
            tracing::warn!(step = alias, cap = cfg.pair_cap, "response truncated to fit the trace");
        }
        for (k, l) in flat.pairs {
            trace.insert(k, TraceValue::Generated(l)).map_err(|e| fail(attempts, e.into()))?;
        }
        for (name, value) in &exchange.response_headers {
            let key = TraceKey::param(alias, Direction::Response, Section::Header, name)
                .map_err(|e| fail(attempts, e.into()))?;
            if !response_headers.iter().any(|(k, _)| *k == key) {
                response_headers.push((key, value.clone()));
            }
        }
    }

    resolve_all(&trace).map_err(|e| Failure {
        step: None,
        attempts: 0,
        error: e.into(),
    })?;
    Ok(HappyPath {
        plan,
        trace,
        exchanges: std::mem::take(exchanges),
        attempts_per_step,
    })
}

/// JSON bodies are parsed; anything else is kept as one string leaf.
pub(crate) fn response_body_value(text: &str) -> Option<Value> {
    if text.trim().is_empty() {
        return None;
    }
    Some(serde_json::from_str(text).unwrap_or_else(|_| Value::String(text.to_string())))
}
