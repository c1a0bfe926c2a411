//! Runs generated code in a throwaway workspace.
//!
//! Isolation is limited to a private temporary directory, a wall-clock
//! timeout enforced by killing the whole process group, and a scrubbed
//! environment. There is no container or VM boundary: generated code can
//! still reach the network and any path the current user can read.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Read};
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::Path;
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

use crate::artifact::CodeArtifact;

pub const ENTRYPOINT_PLACEHOLDER: &str = "{entrypoint}";
/// Exit status reported for runs killed by the timeout (as coreutils `timeout`).
pub const DEFAULT_TIMEOUT_EXIT_STATUS: i32 = 124;
pub const DEFAULT_MAX_REPAIRS: u32 = 1;
pub const TIMEOUT_ENV: &str = "DDAP_SANDBOX_TIMEOUT_SECONDS";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SandboxLimits {
    pub wall_clock_seconds: u64,
    pub output_truncation_bytes: usize,
    pub interpreter_command_template: String,
    pub timeout_exit_status: i32,
}

impl Default for SandboxLimits {
    fn default() -> Self {
        SandboxLimits {
            wall_clock_seconds: 600,
            output_truncation_bytes: 65536,
            interpreter_command_template: format!("python3 {ENTRYPOINT_PLACEHOLDER}"),
            timeout_exit_status: DEFAULT_TIMEOUT_EXIT_STATUS,
        }
    }
}

impl SandboxLimits {
    /// Defaults, with the timeout taken from `DDAP_SANDBOX_TIMEOUT_SECONDS` if set.
    pub fn from_env() -> Result<Self, SandboxError> {
        let mut limits = SandboxLimits::default();
        if let Ok(raw) = std::env::var(TIMEOUT_ENV) {
            limits.wall_clock_seconds = raw.trim().parse().map_err(|_| {
                SandboxError::InvalidLimits(format!(
                    "{TIMEOUT_ENV}={raw:?} is not a whole number of seconds"
                ))
            })?;
        }
        limits.validate()?;
        Ok(limits)
    }

    pub fn validate(&self) -> Result<(), SandboxError> {
        if self.wall_clock_seconds == 0 {
            return Err(SandboxError::InvalidLimits(
                "wall_clock_seconds must be positive".into(),
            ));
        }
        let n = self
            .interpreter_command_template
            .matches(ENTRYPOINT_PLACEHOLDER)
            .count();
        if n != 1 {
            return Err(SandboxError::InvalidLimits(format!(
                "interpreter template must contain {ENTRYPOINT_PLACEHOLDER} exactly once, found {n}"
            )));
        }
        Ok(())
    }

    fn argv(&self, entrypoint: &str) -> Vec<String> {
        self.interpreter_command_template
            .split_whitespace()
            .map(|t| t.replace(ENTRYPOINT_PLACEHOLDER, entrypoint))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub exit_status: i32,
    pub stdout_excerpt: String,
    pub stderr_excerpt: String,
    pub duration_ms: u64,
    pub timed_out: bool,
}

impl ExecutionResult {
    pub fn succeeded(&self) -> bool {
        self.exit_status == 0 && !self.timed_out
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SandboxError {
    #[error("interpreter `{0}` not found")]
    InterpreterNotFound(String),
    #[error("invalid sandbox limits: {0}")]
    InvalidLimits(String),
    #[error("code artifact cannot be materialized: {0}")]
    BadCode(String),
    #[error("workspace I/O error: {0}")]
    Workspace(#[from] io::Error),
}

/// Keeps the last `limit` bytes. A multi-byte character cut at the start
/// of the window is dropped rather than mangled.
pub fn tail_truncate(bytes: &[u8], limit: usize) -> String {
    let mut start = bytes.len().saturating_sub(limit);
    while start < bytes.len() && (bytes[start] & 0b1100_0000) == 0b1000_0000 {
        start += 1;
    }
    String::from_utf8_lossy(&bytes[start..]).into_owned()
}

/// Writes every file of `code` below `dir`.
pub fn materialize(code: &CodeArtifact, dir: &Path) -> Result<(), SandboxError> {
    for file in &code.files {
        crate::artifact::validate::check_relative_path(&file.relative_path)
            .map_err(|m| SandboxError::BadCode(format!("{}: {m}", file.relative_path)))?;
        let dest = dir.join(&file.relative_path);
        if let Some(parent) = dest.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(dest, &file.content)?;
    }
    if code.entrypoint_file().is_none() {
        return Err(SandboxError::BadCode(format!(
            "entrypoint {} is not among the files",
            code.entrypoint
        )));
    }
    Ok(())
}

fn spawn_tail_reader<R: Read + Send + 'static>(
    mut source: R,
    limit: usize,
) -> thread::JoinHandle<Vec<u8>> {
    thread::spawn(move || {
        let mut kept = Vec::new();
        let mut chunk = [0u8; 8192];
        loop {
            match source.read(&mut chunk) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    kept.extend_from_slice(&chunk[..n]);
                    if kept.len() > limit.saturating_mul(2).max(8192) {
                        kept.drain(..kept.len() - limit);
                    }
                }
            }
        }
        kept
    })
}

/// Materializes `code` in a fresh temporary directory and runs it.
///
/// A nonzero exit or a timeout is a normal result; only a missing
/// interpreter or an unusable workspace is an error.
pub fn execute_code(
    code: &CodeArtifact,
    limits: &SandboxLimits,
) -> Result<ExecutionResult, SandboxError> {
    limits.validate()?;
    let workspace = tempfile::Builder::new().prefix("ddap-run-").tempdir()?;
    materialize(code, workspace.path())?;

    let argv = limits.argv(&code.entrypoint);
    let mut cmd = Command::new(&argv[0]);
    cmd.args(&argv[1..])
        .current_dir(workspace.path())
        .env_clear()
        .env(
            "PATH",
            std::env::var_os("PATH").unwrap_or_else(|| "/usr/local/bin:/usr/bin:/bin".into()),
        )
        .env("HOME", workspace.path())
        .env("TMPDIR", workspace.path())
        .env("LANG", "C.UTF-8")
        .env("PYTHONDONTWRITEBYTECODE", "1")
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0);

    let started = Instant::now();
    let mut child = match cmd.spawn() {
        Ok(c) => c,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Err(SandboxError::InterpreterNotFound(argv[0].clone()))
        }
        Err(e) => return Err(e.into()),
    };
    let limit = limits.output_truncation_bytes;
    let stdout = spawn_tail_reader(child.stdout.take().expect("stdout is piped"), limit);
    let stderr = spawn_tail_reader(child.stderr.take().expect("stderr is piped"), limit);

    let timeout = Duration::from_secs(limits.wall_clock_seconds);
    let (status, timed_out) = match child.wait_timeout(timeout)? {
        Some(status) => (Some(status), false),
        None => {
            // SAFETY: kill(2) with a negated pid signals the child's own process
            // group, created by `process_group(0)` above.
            unsafe {
                libc::kill(-(child.id() as libc::pid_t), libc::SIGKILL);
            }
            child.wait()?;
            (None, true)
        }
    };
    let duration_ms = started.elapsed().as_millis() as u64;
    let stdout = stdout.join().unwrap_or_default();
    let stderr = stderr.join().unwrap_or_default();

    let exit_status = match status {
        None => limits.timeout_exit_status,
        Some(s) => s.code().unwrap_or_else(|| 128 + s.signal().unwrap_or(0)),
    };
    Ok(ExecutionResult {
        exit_status,
        stdout_excerpt: tail_truncate(&stdout, limit),
        stderr_excerpt: tail_truncate(&stderr, limit),
        duration_ms,
        timed_out,
    })
}

/// The failure context handed to the repair agent: every file verbatim,
/// then the exit status and the stderr excerpt verbatim.
pub fn repair_context(code: &CodeArtifact, failure: &ExecutionResult) -> String {
    let mut out = format!(
        "The program below failed. Entrypoint: {}. Return the complete corrected file set.\n",
        code.entrypoint
    );
    for file in &code.files {
        let _ = write!(
            out,
            "\n--- file: {} ---\n{}",
            file.relative_path, file.content
        );
        if !file.content.ends_with('\n') {
            out.push('\n');
        }
    }
    if failure.timed_out {
        out.push_str("\nThe run was stopped by the timeout.");
    } else {
        let _ = write!(out, "\nExit status: {}", failure.exit_status);
    }
    let _ = write!(out, "\n--- stderr ---\n{}", failure.stderr_excerpt);
    out
}
