//! Argument parsing and dispatch for the `happypath` binary.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use happypath_core::happy_path::OverrideStep;
use happypath_core::negative::TestKind;
use happypath_core::pipeline::{cmd_all, cmd_generate, cmd_run, exit_code, PipelineConfig};
use happypath_core::report::{load_report, render_text, write_report, RunReport, REPORT_TXT};
use serde_json::Value;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURES: i32 = 1;
pub const EXIT_TOOL_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "happypath", version, about = "Generate and run REST API test suites from an OpenAPI document")]
pub struct Cli {
    /// Log more (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build suites into a workspace without executing them.
    Generate(GenerateArgs),
    /// Execute the suites of an existing workspace. No LLM calls.
    Run(RunArgs),
    /// Generate, then run.
    All(GenerateArgs),
    /// Print the report of a workspace, re-rendering report.txt.
    Report(ReportArgs),
}

/// Settings shared by every command that talks to the service.
#[derive(Debug, Args, Default)]
pub struct ServiceArgs {
    /// JSON or YAML file with any of the settings below; flags win.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Base URL of the service; defaults to the document's first server.
    #[arg(long)]
    pub base_url: Option<String>,
    /// Shell command restoring the service state, run before each
    /// happy-path build and each test case.
    #[arg(long, value_name = "CMD")]
    pub init_script: Option<String>,
    #[arg(long, value_name = "SECS")]
    pub init_timeout: Option<u64>,
    #[arg(long, value_name = "SECS")]
    pub request_timeout: Option<u64>,
    /// Skip TLS certificate verification.
    #[arg(long)]
    pub insecure: bool,
}

#[derive(Debug, Args, Default)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub service: ServiceArgs,
    /// OpenAPI document, path or http(s) URL.
    #[arg(long)]
    pub spec: Option<String>,
    /// Operation ids or glob patterns (repeatable or comma separated).
    #[arg(long = "operation", value_delimiter = ',', value_name = "PATTERN")]
    pub operations: Vec<String>,
    /// Test kinds to generate: happy_path, structural, functional.
    #[arg(long, value_delimiter = ',', value_name = "KIND", value_parser = parse_kind)]
    pub kinds: Vec<TestKind>,
    /// Free-form hints passed to every prompt.
    #[arg(long, conflicts_with = "guidance_file")]
    pub guidance: Option<String>,
    #[arg(long, value_name = "FILE")]
    pub guidance_file: Option<PathBuf>,
    /// Fixed sequence for one operation: TARGET=OP[,ALIAS:OP...] (repeatable).
    #[arg(long = "sequence", value_name = "TARGET=STEPS", value_parser = parse_sequence)]
    pub sequences: Vec<(String, Vec<OverrideStep>)>,
    /// Replies from a replay file instead of a live model.
    #[arg(long, value_name = "FILE")]
    pub replay: Option<PathBuf>,
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Name of the environment variable holding the API key.
    #[arg(long, value_name = "NAME")]
    pub api_key_env: Option<String>,
    #[arg(long, value_name = "SECS")]
    pub llm_timeout: Option<u64>,
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Re-prompts after a malformed model reply.
    #[arg(long, value_name = "N")]
    pub max_reprompts: Option<u32>,
    /// Extra attempts per happy-path step after a 4xx.
    #[arg(long, value_name = "N")]
    pub max_retries: Option<u32>,
    #[arg(long, value_name = "N")]
    pub max_sequence_len: Option<usize>,
    #[arg(long, value_name = "N")]
    pub max_structural: Option<usize>,
    #[arg(long, value_name = "N")]
    pub max_functional: Option<usize>,
    /// Character budget of each operation description in prompts.
    #[arg(long, value_name = "CHARS")]
    pub summary_budget: Option<usize>,
    #[arg(short, long = "out", value_name = "DIR")]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct RunArgs {
    #[command(flatten)]
    pub service: ServiceArgs,
    /// Workspace written by `generate`.
    #[arg(default_value = "happypath-out")]
    pub workspace: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(default_value = "happypath-out")]
    pub workspace: PathBuf,
}

fn parse_kind(s: &str) -> Result<TestKind, String> {
    match s.trim() {
        "happy" | "happy_path" => Ok(TestKind::HappyPath),
        "structural" => Ok(TestKind::Structural),
        "functional" => Ok(TestKind::Functional),
        other => Err(format!("unknown test kind '{other}' (happy_path, structural, functional)")),
    }
}

fn parse_sequence(s: &str) -> Result<(String, Vec<OverrideStep>), String> {
    let (target, steps) = s.split_once('=').ok_or("expected TARGET=OP[,OP...]")?;
    let steps: Vec<OverrideStep> = steps
        .split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| match p.split_once(':') {
            Some((alias, op)) => OverrideStep::Aliased {
                alias: alias.to_string(),
                operation_id: op.to_string(),
            },
            None => OverrideStep::Operation(p.to_string()),
        })
        .collect();
    if target.trim().is_empty() || steps.is_empty() {
        return Err("expected TARGET=OP[,OP...]".into());
    }
    Ok((target.trim().to_string(), steps))
}

/// Reads a JSON or YAML config file. `output_dir` and `guidance_file` are
/// accepted next to the pipeline settings.
pub fn load_config_file(path: &Path) -> anyhow::Result<PipelineConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut doc: Value = serde_yaml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let Some(map) = doc.as_object_mut() else {
        bail!("{}: expected a mapping at the top level", path.display());
    };
    let output_dir = map.remove("output_dir");
    let guidance_file = map.remove("guidance_file");
    let mut cfg: PipelineConfig = serde_json::from_value(doc).with_context(|| format!("in {}", path.display()))?;
    if let Some(dir) = output_dir {
        cfg.output_dir = serde_json::from_value(dir).context("output_dir")?;
    }
    if let Some(file) = guidance_file {
        let file: PathBuf = serde_json::from_value(file).context("guidance_file")?;
        cfg.guidance = Some(read_guidance(&file)?);
    }
    Ok(cfg)
}

fn read_guidance(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading guidance {}", path.display()))
}

impl ServiceArgs {
    fn base(&self) -> anyhow::Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => load_config_file(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(v) = &self.base_url {
            cfg.base_url = Some(v.clone());
        }
        if let Some(v) = &self.init_script {
            cfg.init_script = Some(v.clone());
        }
        if let Some(v) = self.init_timeout {
            cfg.init_timeout_secs = v;
        }
        if let Some(v) = self.request_timeout {
            cfg.request_timeout_secs = v;
        }
        if self.insecure {
            cfg.verify_tls = false;
        }
        Ok(cfg)
    }
}

impl GenerateArgs {
    /// The config file (if any) overlaid with the flags that were given.
    pub fn to_config(&self) -> anyhow::Result<PipelineConfig> {
        let mut cfg = self.service.base()?;
        if let Some(v) = &self.spec {
            cfg.spec = v.clone();
        }
        if !self.operations.is_empty() {
            cfg.operations = self.operations.clone();
        }
        if !self.kinds.is_empty() {
            cfg.kinds = self.kinds.iter().copied().collect();
        }
        if let Some(v) = &self.guidance {
            cfg.guidance = Some(v.clone());
        }
        if let Some(f) = &self.guidance_file {
            cfg.guidance = Some(read_guidance(f)?);
        }
        for (target, steps) in &self.sequences {
            cfg.sequences.insert(target.clone(), steps.clone());
        }
        if let Some(v) = &self.replay {
            cfg.replay = Some(v.clone());
        }
        let p = &mut cfg.provider;
        if let Some(v) = &self.endpoint {
            p.endpoint = v.clone();
        }
        if let Some(v) = &self.model {
            p.model = v.clone();
        }
        if let Some(v) = &self.api_key_env {
            p.api_key_env = v.clone();
        }
        if let Some(v) = self.llm_timeout {
            p.timeout_secs = v;
        }
        if let Some(v) = self.temperature {
            p.temperature = v;
        }
        if let Some(v) = self.max_reprompts {
            p.max_reprompts = v;
        }
        if let Some(v) = self.max_retries {
            cfg.happy_path.max_retries_per_step = v;
        }
        if let Some(v) = self.max_sequence_len {
            cfg.happy_path.max_sequence_len = v;
        }
        if let Some(v) = self.max_structural {
            cfg.scenarios.max_structural = v;
        }
        if let Some(v) = self.max_functional {
            cfg.scenarios.max_functional = v;
        }
        if let Some(v) = self.summary_budget {
            cfg.happy_path.summary_budget = v;
            cfg.scenarios.summary_budget = v;
        }
        if let Some(v) = &self.output_dir {
            cfg.output_dir = v.clone();
        }
        if cfg.spec.trim().is_empty() {
            bail!("no OpenAPI document given (--spec or `spec` in the config file)");
        }
        Ok(cfg)
    }
}

/// Runs one parsed command line and returns the process exit code. Tool
/// errors are printed to stderr and map to 2.
pub fn run(cli: Cli) -> i32 {
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_TOOL_ERROR
        }
    }
}

fn dispatch(command: Command) -> anyhow::Result<i32> {
    match command {
        Command::Generate(args) => {
            let cfg = args.to_config()?;
            let report = cmd_generate(&cfg)?;
            print_summary(&report, &cfg.output_dir);
            Ok(EXIT_OK)
        }
        Command::All(args) => {
            let cfg = args.to_config()?;
            let report = cmd_all(&cfg)?;
            print!("{}", render_text(&report));
            Ok(exit_code(&report))
        }
        Command::Run(args) => {
            let cfg = args.service.base()?;
            cfg.validate()?;
            let report = cmd_run(&args.workspace, &cfg)?;
            print!("{}", render_text(&report));
            Ok(exit_code(&report))
        }
        Command::Report(args) => {
            let report = load_report(&args.workspace)?;
            write_report(&args.workspace, &report)?;
            print!("{}", render_text(&report));
            tracing::info!(file = %args.workspace.join(REPORT_TXT).display(), "re-rendered");
            Ok(if report.execution.is_some() { exit_code(&report) } else { EXIT_OK })
        }
    }
}

fn print_summary(report: &RunReport, dir: &Path) {
    let m = &report.metrics;
    println!(
        "generated {} test cases for {} of {} operations into {}",
        m.test_case_count,
        m.operations_covered,
        report.operations.len(),
        dir.display()
    );
    if m.server_errors > 0 {
        println!("{} distinct server errors during generation; see report.txt", m.server_errors);
    }
}

pub fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter =
        tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequences_parse_with_optional_aliases() {
        let (t, steps) = parse_sequence("getRoom=createRoom,probe:getRoom").unwrap();
        assert_eq!(t, "getRoom");
        assert_eq!(
            steps,
            vec![
                OverrideStep::Operation("createRoom".into()),
                OverrideStep::Aliased {
                    alias: "probe".into(),
                    operation_id: "getRoom".into()
                }
            ]
        );
        assert!(parse_sequence("getRoom=").is_err());
        assert!(parse_sequence("getRoom").is_err());
    }

    #[test]
    fn kinds_accept_short_happy() {
        assert_eq!(parse_kind("happy"), Ok(TestKind::HappyPath));
        assert!(parse_kind("fuzz").is_err());
    }

    #[test]
    fn flags_override_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("cfg.yaml");
        std::fs::write(
            &file,
            "spec: api.yaml\nbase_url: http://a\noutput_dir: out-a\nkinds: [structural]\nhappy_path: {max_retries_per_step: 1}\n",
        )
        .unwrap();
        let cli = Cli::parse_from([
            "happypath",
            "generate",
            "--config",
            file.to_str().unwrap(),
            "--base-url",
            "http://b",
            "--max-structural",
            "4",
        ]);
        let Command::Generate(args) = cli.command else { panic!() };
        let cfg = args.to_config().unwrap();
        assert_eq!(cfg.spec, "api.yaml");
        assert_eq!(cfg.base_url.as_deref(), Some("http://b"));
        assert_eq!(cfg.output_dir, PathBuf::from("out-a"));
        assert_eq!(cfg.kinds.iter().copied().collect::<Vec<_>>(), vec![TestKind::Structural]);
        assert_eq!(cfg.happy_path.max_retries_per_step, 1);
        assert_eq!(cfg.scenarios.max_structural, 4);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("cfg.json");
        std::fs::write(&file, r#"{"spec": "a.yaml", "api_key": "sk-123"}"#).unwrap();
        assert!(load_config_file(&file).is_err());
    }

    #[test]
    fn missing_spec_is_a_tool_error() {
        let cli = Cli::parse_from(["happypath", "generate"]);
        assert_eq!(run(cli), EXIT_TOOL_ERROR);
    }
}
