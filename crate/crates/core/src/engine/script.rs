use std::io::Read;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use wait_timeout::ChildExt;

/// A shell command run before each happy-path build and each test case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvInitScript {
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub working_dir: Option<PathBuf>,
    pub timeout_secs: u64,
}

impl EnvInitScript {
    pub const DEFAULT_TIMEOUT_SECS: u64 = 60;

    pub fn new(command: impl Into<String>) -> Self {
        Self {
            command: command.into(),
            working_dir: None,
            timeout_secs: Self::DEFAULT_TIMEOUT_SECS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptOutput {
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScriptError {
    #[error("init script timed out after {secs} s")]
    ScriptTimeout { secs: u64, output: String },
    #[error("init script not found: {0}")]
    ScriptNotFound(String),
    #[error("init script exited with {}: {output}", exit_code.map_or("a signal".to_string(), |c| format!("status {c}")))]
    Failed { exit_code: Option<i32>, output: String },
    #[error("invalid init script: {0}")]
    Invalid(String),
    #[error("cannot start init script: {0}")]
    Io(String),
}

/// Runs the command through `sh -c`, blocking until it exits or the timeout
/// passes. Stdout and stderr are captured together.
pub fn run_init_script(script: &EnvInitScript) -> Result<ScriptOutput, ScriptError> {
    if script.timeout_secs == 0 {
        return Err(ScriptError::Invalid("timeout must be positive".into()));
    }
    if script.command.trim().is_empty() {
        return Err(ScriptError::Invalid("empty command".into()));
    }
    let mut cmd = Command::new("sh");
    cmd.arg("-c")
        .arg(&script.command)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    if let Some(dir) = &script.working_dir {
        if !dir.is_dir() {
            return Err(ScriptError::ScriptNotFound(format!("working directory {}", dir.display())));
        }
        cmd.current_dir(dir);
    }
    let mut child = cmd.spawn().map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => ScriptError::ScriptNotFound("sh".into()),
        _ => ScriptError::Io(e.to_string()),
    })?;
    let readers = [
        child.stdout.take().map(|s| spawn_reader(Box::new(s))),
        child.stderr.take().map(|s| spawn_reader(Box::new(s))),
    ];
    let status = child
        .wait_timeout(Duration::from_secs(script.timeout_secs))
        .map_err(|e| ScriptError::Io(e.to_string()))?;
    let status = match status {
        Some(s) => s,
        None => {
            let _ = child.kill();
            let _ = child.wait();
            return Err(ScriptError::ScriptTimeout {
                secs: script.timeout_secs,
                output: collect(readers),
            });
        }
    };
    let output = collect(readers);
    tracing::debug!(command = %script.command, ?status, "init script finished");
    match status.code() {
        Some(0) => Ok(ScriptOutput { output }),
        Some(127) => Err(ScriptError::ScriptNotFound(format!("{}: {}", script.command, output.trim()))),
        code => Err(ScriptError::Failed { exit_code: code, output }),
    }
}

fn spawn_reader(mut src: Box<dyn Read + Send>) -> mpsc::Receiver<String> {
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = src.read_to_end(&mut buf);
        let _ = tx.send(String::from_utf8_lossy(&buf).into_owned());
    });
    rx
}

/// Background processes started by the script may keep the pipes open, so
/// output is collected with a grace period instead of waiting for EOF.
fn collect(readers: [Option<mpsc::Receiver<String>>; 2]) -> String {
    readers
        .into_iter()
        .flatten()
        .filter_map(|rx| rx.recv_timeout(Duration::from_secs(2)).ok())
        .collect::<Vec<_>>()
        .concat()
}
