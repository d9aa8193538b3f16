use std::collections::BTreeMap;

use serde_json::json;

use super::*;
use crate::happy_path::PlanStep;
use crate::runner::{OperationGeneration, ServerErrorSignature};
use crate::oas::HttpMethod;

fn artifacts() -> OperationArtifacts {
    OperationArtifacts {
        operation_id: "createRoom".into(),
        directory: "createRoom".into(),
        plan: PlanRecord {
            plan: OperationPlan {
                target_operation_id: "createRoom".into(),
                steps: vec![PlanStep {
                    alias: "createRoom".into(),
                    operation_id: "createRoom".into(),
                }],
                usage_guide: "g".into(),
            },
            attempts_per_step: vec![1],
        },
        trace: json!([]),
        scenarios: vec![],
        collection: Some(("createRoom.postman_collection.json".into(), "{}\n".into())),
    }
}

fn generation() -> GenerationSummary {
    GenerationSummary {
        operations: vec![OperationGeneration {
            operation_id: "createRoom".into(),
            covered: true,
            test_cases: 3,
            error: None,
            notes: vec![],
        }],
        server_errors: vec![ServerErrorRecord {
            phase: Phase::Generation,
            operation_id: "crash".into(),
            test_case: None,
            step_alias: "crash".into(),
            status: 500,
            signature: ServerErrorSignature {
                method: HttpMethod::Get,
                path_template: "/crash".into(),
                override_keys: vec![],
            },
        }],
        ledger: Default::default(),
    }
}

fn files_under(root: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read_to_string(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn layout_of_one_operation() {
    let dir = tempfile::tempdir().unwrap();
    let outcomes = SuiteOutcomes {
        operation_id: "createRoom".into(),
        outcomes: vec![],
    };
    let mut report = RunReport::new(json!({}), vec![], generation(), None);
    let written = write_workspace(dir.path(), &[artifacts()], &[outcomes], &mut report).unwrap();
    assert_eq!(written.len(), 7);
    let tree = files_under(dir.path());
    assert_eq!(tree.len(), 7);
    let per_op = tree.keys().filter(|k| k.starts_with("createRoom/")).count();
    assert_eq!(per_op, 5);
    let loaded = load_report(dir.path()).unwrap();
    assert_eq!(loaded, report);
    for f in loaded.operations.iter().flat_map(|o| &o.files) {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
}

#[test]
fn empty_run_writes_only_top_level_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut report = RunReport::new(json!({}), vec![], GenerationSummary::default(), Some(&ExecutionResult::default()));
    write_workspace(dir.path(), &[], &[], &mut report).unwrap();
    let tree = files_under(dir.path());
    assert_eq!(tree.keys().collect::<Vec<_>>(), [REPORT_JSON, REPORT_TXT]);
    assert_eq!(report.metrics.test_case_count, 0);
}

#[test]
fn rewrites_differ_only_in_timestamp() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let mut report = RunReport::new(json!({"x": 1}), vec![], generation(), None);
        report.timestamp = format!("T-{}", d.path().display());
        write_workspace(d.path(), &[artifacts()], &[], &mut report).unwrap();
    }
    let (ta, tb) = (files_under(a.path()), files_under(b.path()));
    assert_eq!(ta.keys().collect::<Vec<_>>(), tb.keys().collect::<Vec<_>>());
    for (k, va) in &ta {
        if k == REPORT_JSON {
            let mut ja: Value = serde_json::from_str(va).unwrap();
            let mut jb: Value = serde_json::from_str(&tb[k]).unwrap();
            assert_ne!(ja["timestamp"], jb["timestamp"]);
            ja["timestamp"] = Value::Null;
            jb["timestamp"] = Value::Null;
            assert_eq!(ja, jb);
        } else {
            assert_eq!(va, &tb[k], "{k}");
        }
    }
}

#[test]
fn server_errors_lead_the_text_report() {
    let report = RunReport::new(json!({}), vec![], generation(), None);
    let text = render_text(&report);
    assert!(text.starts_with("== SERVER ERRORS (1 distinct) ==\n[generation] crash: GET /crash -> 500\n"), "{text}");
}

#[test]
fn directory_names_are_unique() {
    assert_eq!(directory_names(["a/b", "a_b", "report.json", ""]), ["a_b", "a_b_2", "report_json", "operation"]);
}

#[test]
fn corrupt_report_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_report(dir.path()), Err(ReportError::Io { .. })));
    fs::write(dir.path().join(REPORT_JSON), "{").unwrap();
    assert!(matches!(load_report(dir.path()), Err(ReportError::Corrupt { .. })));
}
