use super::*;
use crate::runner::{ExecutionResult, SuiteOutcomes, TestOutcome};

#[test]
fn default_config_is_valid_and_selects_everything() {
    let cfg = PipelineConfig::default();
    cfg.validate().unwrap();
    assert_eq!(cfg.kinds.len(), 3);
    assert!(cfg.selects("anything"));
}

#[test]
fn validation_rejects_empty_kinds_and_zero_budgets() {
    let bad = [
        PipelineConfig {
            kinds: BTreeSet::new(),
            ..PipelineConfig::default()
        },
        PipelineConfig {
            request_timeout_secs: 0,
            ..PipelineConfig::default()
        },
        PipelineConfig {
            scenarios: ScenarioConfig {
                max_functional: 0,
                ..ScenarioConfig::default()
            },
            ..PipelineConfig::default()
        },
        PipelineConfig {
            operations: vec!["[".into()],
            ..PipelineConfig::default()
        },
    ];
    for cfg in bad {
        assert!(matches!(cfg.validate(), Err(PipelineError::Config(_))), "{cfg:?}");
    }
    // A zero budget only matters for a selected kind.
    let cfg = PipelineConfig {
        kinds: [TestKind::HappyPath, TestKind::Structural].into_iter().collect(),
        scenarios: ScenarioConfig {
            max_functional: 0,
            ..ScenarioConfig::default()
        },
        ..PipelineConfig::default()
    };
    cfg.validate().unwrap();
}

#[test]
fn operation_filters_take_ids_and_globs() {
    let cfg = PipelineConfig {
        operations: vec!["getRoom".into(), "set*".into()],
        ..PipelineConfig::default()
    };
    assert!(cfg.selects("getRoom"));
    assert!(cfg.selects("setAvailability"));
    assert!(!cfg.selects("getRooms"));
    assert!(!cfg.selects("createRoom"));
}

#[test]
fn echo_leaves_out_the_output_directory() {
    let a = PipelineConfig {
        output_dir: "one".into(),
        ..PipelineConfig::default()
    };
    let b = PipelineConfig {
        output_dir: "two".into(),
        ..PipelineConfig::default()
    };
    assert_eq!(a.echo(), b.echo());
    assert!(a.echo().get("output_dir").is_none());
    assert_eq!(a.echo()["provider"]["api_key_env"], "OPENAI_API_KEY");
    let back: PipelineConfig = serde_json::from_value(a.echo()).unwrap();
    assert_eq!(back, PipelineConfig::default());
}

#[test]
fn unknown_keys_are_rejected() {
    assert!(serde_json::from_str::<PipelineConfig>(r#"{"spec": "x", "speck": "y"}"#).is_err());
    assert!(serde_json::from_str::<PipelineConfig>(r#"{"provider": {"api_key": "k"}}"#).is_err());
    let partial: PipelineConfig = serde_json::from_str(r#"{"happy_path": {"max_retries_per_step": 1}}"#).unwrap();
    assert_eq!(partial.happy_path.max_sequence_len, HappyPathConfig::default().max_sequence_len);
}

fn report_with(verdicts: &[Verdict], server_errors: usize) -> RunReport {
    let outcomes = verdicts
        .iter()
        .enumerate()
        .map(|(i, v)| TestOutcome {
            name: format!("c{i}"),
            kind: TestKind::HappyPath,
            verdict: *v,
            final_status: None,
            exchanges: Vec::new(),
            detail: String::new(),
        })
        .collect();
    let exec = ExecutionResult {
        suites: vec![SuiteOutcomes {
            operation_id: "op".into(),
            outcomes,
        }],
        server_errors: Vec::new(),
    };
    let mut report = RunReport::new(Value::Null, Vec::new(), GenerationSummary::default(), Some(&exec));
    report.metrics.server_errors = server_errors;
    report
}

#[test]
fn exit_code_is_zero_only_for_a_clean_run() {
    assert_eq!(exit_code(&report_with(&[Verdict::Passed, Verdict::Passed], 0)), 0);
    assert_eq!(exit_code(&report_with(&[], 0)), 0);
    for v in [Verdict::Failed, Verdict::ServerError, Verdict::SetupFailed] {
        assert_eq!(exit_code(&report_with(&[Verdict::Passed, v], 0)), 1, "{v:?}");
    }
    assert_eq!(exit_code(&report_with(&[Verdict::Passed], 1)), 1);
}

#[test]
fn fatal_gateway_errors() {
    assert!(!gateway_fatal(&GatewayError::MalformedAfterRetries {
        attempts: 3,
        last_error: "bad".into()
    }));
    assert!(gateway_fatal(&GatewayError::ScriptExhausted(crate::llm::Purpose::Plan)));
}
