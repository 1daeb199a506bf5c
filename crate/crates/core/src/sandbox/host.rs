use std::fs;
use std::path::PathBuf;
use std::process::Command;

use super::{Sandbox, SandboxError, SmokeReport, SmokeRequest};
use crate::repo::Repository;

/// Runs the external shim in a scratch directory:
/// `<program> --repo DIR (--data DIR | --stub) --iters N [--eval] --report PATH`.
#[derive(Debug, Clone)]
pub struct HostSandbox {
    pub program: Vec<String>,
    pub workdir: PathBuf,
}

impl HostSandbox {
    /// `program` is split on whitespace, so `python3 -m shim` works.
    pub fn new(program: &str, workdir: impl Into<PathBuf>) -> Self {
        HostSandbox {
            program: program.split_whitespace().map(str::to_string).collect(),
            workdir: workdir.into(),
        }
    }

    fn command(&self, repo_dir: &std::path::Path, report: &std::path::Path, req: &SmokeRequest) -> Command {
        let mut cmd = Command::new(&self.program[0]);
        cmd.args(&self.program[1..]).arg("--repo").arg(repo_dir);
        match &req.data {
            Some(d) => cmd.arg("--data").arg(d),
            None => cmd.arg("--stub"),
        };
        cmd.arg("--iters").arg(req.iters.to_string());
        if req.eval {
            cmd.arg("--eval");
        }
        cmd.arg("--report").arg(report);
        cmd
    }
}

impl Sandbox for HostSandbox {
    fn run(&self, repo: &Repository, req: &SmokeRequest) -> Result<SmokeReport, SandboxError> {
        if self.program.is_empty() {
            return Err(SandboxError::Crash("no shim program configured".into()));
        }
        if req.iters == 0 {
            return Err(SandboxError::Crash("iterations must be positive".into()));
        }
        fs::create_dir_all(&self.workdir)?;
        let scratch = self.workdir.join(format!("smoke-{}", std::process::id()));
        if scratch.exists() {
            fs::remove_dir_all(&scratch)?;
        }
        let repo_dir = scratch.join("repo");
        repo.write_dir(&repo_dir)?;
        let report_path = scratch.join("report.json");
        let out = self
            .command(&repo_dir, &report_path, req)
            .output()
            .map_err(|e| SandboxError::Crash(format!("cannot start `{}`: {e}", self.program[0])))?;
        if !out.status.success() {
            let stderr = String::from_utf8_lossy(&out.stderr);
            return Err(SandboxError::Crash(format!("shim exited with {}: {}", out.status, stderr.trim())));
        }
        let text = fs::read_to_string(&report_path)
            .map_err(|e| SandboxError::Crash(format!("shim wrote no report: {e}")))?;
        let report = SmokeReport::from_json(&text);
        fs::remove_dir_all(&scratch)?;
        report
    }
}
