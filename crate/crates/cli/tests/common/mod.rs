#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use happypath_core::pipeline::PipelineConfig;
use happypath_fixture::{Defects, FixtureServer, OPENAPI_YAML};
use serde_json::Value;
use tempfile::TempDir;

pub const REPLAY: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/fixture_replay.json");

pub const ALL_OPERATIONS: [&str; 7] =
    ["ping", "createRoom", "getRoom", "updateRoom", "setAvailability", "crash", "legacyImport"];

/// A fixture server plus a scratch directory holding its OpenAPI document.
pub struct Env {
    pub server: FixtureServer,
    pub dir: TempDir,
    pub spec: PathBuf,
}

impl Env {
    pub fn new(defects: Defects) -> Self {
        let server = FixtureServer::spawn(defects).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let spec = dir.path().join("openapi.yaml");
        std::fs::write(&spec, OPENAPI_YAML).unwrap();
        Self { server, dir, spec }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// Writes the replay entries recorded for `ops` and returns the file.
    pub fn replay_for(&self, ops: &[&str]) -> PathBuf {
        self.write_replay(&format!("replay-{}.json", ops.join("-")), replay_entries(ops))
    }

    pub fn write_replay(&self, name: &str, entries: Vec<Value>) -> PathBuf {
        let path = self.path(name);
        std::fs::write(&path, serde_json::to_string_pretty(&entries).unwrap()).unwrap();
        path
    }

    /// Config selecting `ops`, resetting the fixture before every build and
    /// case, and writing to `<scratch>/<out>`.
    pub fn config(&self, ops: &[&str], replay: &Path, out: &str) -> PipelineConfig {
        PipelineConfig {
            spec: self.spec.display().to_string(),
            base_url: Some(self.server.base_url()),
            operations: ops.iter().map(|s| s.to_string()).collect(),
            init_script: Some(self.server.reset_command()),
            replay: Some(replay.to_path_buf()),
            output_dir: self.path(out),
            ..PipelineConfig::default()
        }
    }
}

pub fn all_replay_entries() -> Vec<Value> {
    serde_json::from_str(&std::fs::read_to_string(REPLAY).unwrap()).unwrap()
}

pub fn replay_entries(ops: &[&str]) -> Vec<Value> {
    all_replay_entries()
        .into_iter()
        .filter(|e| ops.iter().any(|o| e["operation"] == *o))
        .collect()
}

/// Every file under `root`, keyed by relative path.
pub fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

pub fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Verdict per (operation, case name) from the outcome files of a workspace.
pub fn verdicts(root: &Path) -> BTreeMap<(String, String), String> {
    let report = read_json(&root.join("report.json"));
    let mut out = BTreeMap::new();
    for suite in report["execution"]["suites"].as_array().into_iter().flatten() {
        for case in suite["cases"].as_array().unwrap() {
            out.insert(
                (suite["operation_id"].as_str().unwrap().to_string(), case["name"].as_str().unwrap().to_string()),
                case["verdict"].as_str().unwrap().to_string(),
            );
        }
    }
    out
}

pub fn bin() -> std::process::Command {
    std::process::Command::new(env!("CARGO_BIN_EXE_happypath"))
}
