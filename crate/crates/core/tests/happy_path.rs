#![allow(clippy::result_large_err)]

mod common;

use common::*;
use happypath_core::engine::{render_request, run_init_script, step_request, EngineConfig, EnvInitScript, RequestEngine};
use happypath_core::happy_path::{
    build_happy_path, generate_step_values, plan_sequence, HappyPathConfig, HappyPathContext, HappyPathError,
    OverrideStep, PriorError, ValueRequest,
};
use happypath_core::trace::{resolve_all, Direction, ExecutionTrace, Literal, TraceKey, TraceValue};
use happypath_fixture::{Defects, FixtureServer};
use serde_json::json;

fn key(s: &str) -> TraceKey {
    s.parse().unwrap()
}

#[test]
fn llm_plan_for_dependent_target() {
    let spec = fixture_spec();
    let mut gw = gateway(vec![plan(&["createRoom", "getRoom"])], 2);
    let p = plan_sequence(&mut gw, &spec, "getRoom", None, None, &HappyPathConfig::default()).unwrap();
    let ids: Vec<_> = p.steps.iter().map(|s| s.operation_id.as_str()).collect();
    assert_eq!(ids, ["createRoom", "getRoom"]);
    assert_eq!(p.final_step().operation_id, "getRoom");
    assert!(!p.usage_guide.is_empty());
}

#[test]
fn single_step_plan() {
    let spec = fixture_spec();
    let mut gw = gateway(vec![plan(&["ping"])], 2);
    let p = plan_sequence(&mut gw, &spec, "ping", None, None, &HappyPathConfig::default()).unwrap();
    assert_eq!(p.steps.len(), 1);
    assert_eq!(p.steps[0].alias, "ping");
}

#[test]
fn plan_violating_invariants_is_reprompted_then_rejected() {
    let spec = fixture_spec();
    // Wrong final step, then a valid plan.
    let mut gw = gateway(vec![plan(&["getRoom", "createRoom"]), plan(&["createRoom", "getRoom"])], 2);
    let p = plan_sequence(&mut gw, &spec, "getRoom", None, None, &HappyPathConfig::default()).unwrap();
    assert_eq!(p.steps.len(), 2);
    assert_eq!(gw.ledger().invocations(), 2);

    let mut gw = gateway(vec![plan(&["nope", "getRoom"]); 3], 2);
    let err = plan_sequence(&mut gw, &spec, "getRoom", None, None, &HappyPathConfig::default()).unwrap_err();
    assert!(matches!(err, HappyPathError::PlanInvalid(_)), "{err}");
}

#[test]
fn overrides() {
    let spec = fixture_spec();
    let cfg = HappyPathConfig::default();
    let mut gw = gateway(vec![guide()], 0);
    let steps = vec![
        OverrideStep::Operation("createRoom".into()),
        OverrideStep::Aliased {
            alias: "fetch".into(),
            operation_id: "getRoom".into(),
        },
    ];
    let p = plan_sequence(&mut gw, &spec, "getRoom", None, Some(&steps), &cfg).unwrap();
    assert_eq!(p.steps[1].alias, "fetch");
    assert_eq!(p.usage_guide, "Fixed sequence.");

    let bad = vec![OverrideStep::Operation("missing".into()), OverrideStep::Operation("getRoom".into())];
    let err = plan_sequence(&mut gateway(vec![], 0), &spec, "getRoom", None, Some(&bad), &cfg).unwrap_err();
    assert!(matches!(err, HappyPathError::PlanInvalid(_)));

    let long = vec![OverrideStep::Operation("ping".into()); 9];
    let err = plan_sequence(&mut gateway(vec![], 0), &spec, "ping", None, Some(&long), &cfg).unwrap_err();
    assert_eq!(err, HappyPathError::SequenceTooLong { len: 9, max: 8 });

    let err = plan_sequence(&mut gateway(vec![], 0), &spec, "unknown", None, None, &cfg).unwrap_err();
    assert_eq!(err, HappyPathError::UnknownOperation("unknown".into()));
}

#[test]
fn guidance_is_appended_to_the_planning_prompt() {
    let spec = fixture_spec();
    let (mut gw, provider) = shared_gateway(vec![plan(&["ping"])], 0);
    plan_sequence(&mut gw, &spec, "ping", Some("token is abc123"), None, &HappyPathConfig::default()).unwrap();
    let p = provider.lock().unwrap();
    let prompt = &p.transcript()[0].1;
    assert!(prompt.iter().any(|m| m.content.contains("token is abc123")));
}

#[test]
fn step_values() {
    let spec = fixture_spec();
    let cfg = HappyPathConfig::default();
    let create = spec.operation("createRoom").unwrap();
    let mut gw = gateway(vec![values(json!([room_body("c", json!("std"), 2)]))], 0);
    let trace = ExecutionTrace::new();
    let req = ValueRequest {
        op: create,
        alias: "c",
        usage_guide: "",
        trace: &trace,
        response_headers: &[],
        prior_error: None,
        guidance: None,
    };
    let a = generate_step_values(&mut gw, &req, &cfg).unwrap();
    assert_eq!(a.entries.len(), 3);
    assert!(a.entries.iter().all(|(_, v)| matches!(v, TraceValue::Generated(_))));
    assert_eq!(a.entries[0].0, key("c.request.body.room_type_id"));

    // Second step depends on the first response.
    let mut trace = ExecutionTrace::new();
    trace
        .insert(key("c.response.body.id"), TraceValue::Generated(Literal::Json(json!(1))))
        .unwrap();
    let get = spec.operation("getRoom").unwrap();
    let mut gw = gateway(vec![values(json!([dependent("path.roomId", "c.response.body.id")]))], 0);
    let req = ValueRequest {
        op: get,
        alias: "g",
        trace: &trace,
        ..req
    };
    let a = generate_step_values(&mut gw, &req, &cfg).unwrap();
    assert_eq!(a.entries, vec![(key("g.request.path.roomId"), TraceValue::Dependent(key("c.response.body.id")))]);
    let mut t = trace.clone();
    for (k, v) in a.entries {
        t.insert(k, v).unwrap();
    }
    assert_eq!(resolve_all(&t).unwrap()[&key("g.request.path.roomId")], Literal::Json(json!(1)));

    // Omitting the required path parameter.
    let mut gw = gateway(vec![values(json!([]))], 0);
    let err = generate_step_values(&mut gw, &req, &cfg).unwrap_err();
    assert!(matches!(err, HappyPathError::AssignmentInvalid(ref m) if m.contains("path.roomId")), "{err}");

    // Referencing a key the trace does not have.
    let mut gw = gateway(vec![values(json!([dependent("path.roomId", "c.response.body.nope")]))], 0);
    assert!(matches!(
        generate_step_values(&mut gw, &req, &cfg),
        Err(HappyPathError::AssignmentInvalid(_))
    ));
}

#[test]
fn prior_error_is_quoted_verbatim() {
    let spec = fixture_spec();
    let create = spec.operation("createRoom").unwrap();
    let (mut gw, provider) = shared_gateway(vec![values(json!([room_body("c", json!("std"), 2)]))], 0);
    let trace = ExecutionTrace::new();
    let prior = PriorError {
        status: 400,
        body: r#"{"error":"capacity must be between 1 and 10"}"#.into(),
        previous: vec![(key("c.request.body.capacity"), TraceValue::Generated(Literal::Json(json!(50))))],
    };
    let req = ValueRequest {
        op: create,
        alias: "c",
        usage_guide: "",
        trace: &trace,
        response_headers: &[],
        prior_error: Some(&prior),
        guidance: None,
    };
    generate_step_values(&mut gw, &req, &HappyPathConfig::default()).unwrap();
    let p = provider.lock().unwrap();
    let user = &p.transcript()[0].1[1].content;
    assert!(user.contains(r#"{"error":"capacity must be between 1 and 10"}"#));
    assert!(user.contains("c.request.body.capacity = 50"));
    assert!(user.contains("HTTP 400"));
}

struct Harness {
    server: FixtureServer,
    engine: RequestEngine,
}

impl Harness {
    fn new(defects: Defects) -> Self {
        Self {
            server: FixtureServer::spawn(defects).unwrap(),
            engine: RequestEngine::new(EngineConfig::default()).unwrap(),
        }
    }

    fn build(
        &self,
        entries: Vec<happypath_core::llm::ReplayEntry>,
        target: &str,
        cfg: &HappyPathConfig,
    ) -> Result<happypath_core::happy_path::HappyPath, happypath_core::happy_path::HappyPathFailure> {
        let spec = fixture_spec();
        let mut gw = gateway(entries, 0);
        let base = self.server.base_url();
        let mut ctx = HappyPathContext {
            spec: &spec,
            gateway: &mut gw,
            engine: &self.engine,
            base_url: &base,
            config: cfg,
            guidance: None,
        };
        build_happy_path(&mut ctx, target, None)
    }
}

#[test]
fn create_then_get_against_fixture() {
    let h = Harness::new(Defects::default());
    let hp = h
        .build(
            vec![
                plan(&["createRoom", "getRoom"]),
                values(json!([room_body("createRoom", json!("std"), 2)])),
                values(json!([dependent("getRoom.request.path.roomId", "createRoom.response.body.id")])),
            ],
            "getRoom",
            &HappyPathConfig::default(),
        )
        .unwrap();
    assert_eq!(hp.attempts_per_step, vec![1, 1]);
    assert!(hp.exchanges.iter().all(|e| e.exchange.is_success()));
    for alias in ["createRoom", "getRoom"] {
        for dir in [Direction::Request, Direction::Response] {
            assert!(hp.trace.step_entries(alias, dir).next().is_some(), "{alias} {dir:?}");
        }
    }
    assert_eq!(hp.trace.get(&key("createRoom.response.status")), Some(&TraceValue::Generated(Literal::Json(json!(201)))));
    assert_eq!(hp.trace.get(&key("getRoom.response.body.name")), Some(&TraceValue::Generated(Literal::Json(json!("Blue")))));

    // Replaying the frozen values after a reset reproduces 2xx on every step.
    run_init_script(&EnvInitScript::new(h.server.reset_command())).unwrap();
    let resolved = resolve_all(&hp.trace).unwrap();
    let spec = fixture_spec();
    for step in &hp.plan.steps {
        let op = spec.operation(&step.operation_id).unwrap();
        let plan = render_request(op, &step_request(&resolved, &step.alias), &h.server.base_url()).unwrap();
        assert!(h.engine.send(&plan).unwrap().is_success());
    }
}

#[test]
fn a_4xx_is_retried_with_feedback() {
    let h = Harness::new(Defects::default());
    let hp = h
        .build(
            vec![
                plan(&["createRoom"]),
                values(json!([room_body("createRoom", json!("std"), 50)])),
                values(json!([room_body("createRoom", json!("std"), 2)])),
            ],
            "createRoom",
            &HappyPathConfig::default(),
        )
        .unwrap();
    assert_eq!(hp.attempts_per_step, vec![2]);
    assert_eq!(h.server.request_count("POST /rooms"), 2);
    // Only the successful attempt is in the trace.
    assert_eq!(hp.trace.get(&key("createRoom.request.body.capacity")), Some(&TraceValue::Generated(Literal::Json(json!(2)))));
}

#[test]
fn persistent_400_exhausts_the_step() {
    let h = Harness::new(Defects::default());
    let cfg = HappyPathConfig {
        max_retries_per_step: 2,
        ..HappyPathConfig::default()
    };
    let body = generated("legacyImport.request.body.payload", json!("x"));
    let failure = h
        .build(
            vec![plan(&["legacyImport"]), values(json!([body])), values(json!([body])), values(json!([body]))],
            "legacyImport",
            &cfg,
        )
        .unwrap_err();
    assert_eq!(h.server.request_count("POST /legacy/import"), 3);
    assert_eq!(failure.attempts, 3);
    assert_eq!(failure.step_alias.as_deref(), Some("legacyImport"));
    assert!(matches!(failure.kind, Some(HappyPathError::StepExhausted { attempts: 3, last_status: 400, .. })));
}

#[test]
fn server_error_aborts_generation() {
    let h = Harness::new(Defects::default());
    let failure = h
        .build(vec![plan(&["crash"]), values(json!([]))], "crash", &HappyPathConfig::default())
        .unwrap_err();
    assert!(matches!(
        failure.kind,
        Some(HappyPathError::ServerErrorDuringGeneration { status: 500, .. })
    ));
    assert_eq!(failure.server_errors().count(), 1);
    assert_eq!(h.server.request_count("GET /crash"), 1);
}

#[test]
fn retry_bound_holds_for_any_number_of_rejections() {
    for k in 0..=5usize {
        let h = Harness::new(Defects::default());
        let mut entries = vec![plan(&["createRoom"])];
        for _ in 0..k {
            entries.push(values(json!([room_body("createRoom", json!("std"), 99)])));
        }
        entries.push(values(json!([room_body("createRoom", json!("std"), 3)])));
        let result = h.build(entries, "createRoom", &HappyPathConfig::default());
        assert_eq!(h.server.request_count("POST /rooms"), (k.min(3) + 1) as u64, "k = {k}");
        match result {
            Ok(hp) => {
                assert!(k <= 3);
                assert_eq!(hp.attempts_per_step, vec![k as u32 + 1]);
            }
            Err(f) => {
                assert!(k > 3, "k = {k}: {f}");
                assert!(matches!(f.kind, Some(HappyPathError::StepExhausted { .. })));
            }
        }
    }
}

#[test]
fn response_headers_are_stored_when_referenced() {
    let h = Harness::new(Defects::default());
    let hp = h
        .build(
            vec![
                plan(&["createRoom", "getRoom"]),
                values(json!([room_body("createRoom", json!("std"), 2)])),
                values(json!([
                    dependent("getRoom.request.path.roomId", "createRoom.response.body.id"),
                    dependent("getRoom.request.header.X-Echo", "createRoom.response.header.content-type"),
                ])),
            ],
            "getRoom",
            &HappyPathConfig::default(),
        )
        .unwrap();
    let header_key = key("createRoom.response.header.content-type");
    assert!(hp.trace.contains(&header_key));
    assert!(hp.trace.position(&header_key) < hp.trace.position(&key("getRoom.request.header.X-Echo")));
    assert!(resolve_all(&hp.trace).is_ok());
}
