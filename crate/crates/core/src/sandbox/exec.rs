use std::io::Read;
use std::os::unix::process::CommandExt;
use std::process::{Child, Command, ExitStatus, Stdio};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::feedback::{extract_feedback, truncate_tail};
use super::{ExecStatus, ExecutionResult, Payload, SandboxConfig};

/// Source of the bundled runner shim.
pub const RUNNER_SHIM_SOURCE: &str = include_str!("../../assets/runner_shim.py");

const STREAM_CAPTURE_LIMIT: usize = 64 * 1024;
const RAW_TAIL_LIMIT: usize = 4000;
const POLL_INTERVAL: Duration = Duration::from_millis(10);

/// The single-line verdict emitted by the runner shim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_class: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub traceback_tail: Option<String>,
    pub duration_ms: i64,
}

/// Keeps the last `STREAM_CAPTURE_LIMIT` bytes of a stream.
fn spawn_reader<R: Read + Send + 'static>(mut stream: R) -> (Arc<Mutex<Vec<u8>>>, JoinHandle<()>) {
    let buf = Arc::new(Mutex::new(Vec::new()));
    let sink = Arc::clone(&buf);
    let handle = std::thread::spawn(move || {
        let mut chunk = [0u8; 8192];
        loop {
            match stream.read(&mut chunk) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    let mut b = sink.lock().expect("capture lock");
                    b.extend_from_slice(&chunk[..n]);
                    if b.len() > STREAM_CAPTURE_LIMIT {
                        let excess = b.len() - STREAM_CAPTURE_LIMIT;
                        b.drain(..excess);
                    }
                }
            }
        }
    });
    (buf, handle)
}

fn kill_group(child: &Child) {
    // The child leads its own process group, so this reaches every descendant
    // that did not deliberately escape the group.
    let pgid = child.id() as libc::pid_t;
    unsafe {
        libc::kill(-pgid, libc::SIGKILL);
    }
}

fn char_tail(text: &str, limit: usize) -> String {
    let count = text.chars().count();
    if count <= limit {
        return text.to_string();
    }
    text.chars().skip(count - limit).collect()
}

/// Splits captured stdout into (program output, verdict line).
fn split_verdict(stdout: &str) -> (String, Option<&str>) {
    let trimmed = stdout.trim_end();
    match trimmed.rfind('\n') {
        Some(idx) => (trimmed[..idx].trim_end_matches('\n').to_string(), Some(&trimmed[idx + 1..])),
        None if trimmed.is_empty() => (String::new(), None),
        None => (String::new(), Some(trimmed)),
    }
}

fn classify(verdict: &VerdictRecord, exit: ExitStatus) -> Result<ExecStatus, String> {
    if verdict.error_class.as_deref() == Some("ShimFault") {
        return Err(format!(
            "runner shim fault: {}",
            verdict.message.as_deref().unwrap_or("unknown")
        ));
    }
    let status = match verdict.status.as_str() {
        "pass" => ExecStatus::Pass,
        "fail" => ExecStatus::Fail,
        "error" => ExecStatus::Error,
        other => return Err(format!("runner shim reported unknown status `{other}`")),
    };
    let expected_code = if status == ExecStatus::Pass { 0 } else { 1 };
    if exit.code() != Some(expected_code) {
        return Err(format!("verdict `{}` inconsistent with exit status {exit}", verdict.status));
    }
    Ok(status)
}

/// Runs a payload in a fresh interpreter subprocess under the configured timeout.
///
/// Never returns `Pass` unless the shim produced a well-formed pass verdict
/// and exited with code 0. Infrastructure faults become `HarnessError`.
pub fn execute_with_timeout(payload: &Payload, cfg: &SandboxConfig) -> ExecutionResult {
    let start = Instant::now();
    let elapsed = || start.elapsed().as_secs_f64();
    if let Err(e) = cfg.validate() {
        return ExecutionResult::harness_error(e.to_string(), elapsed(), cfg.timeout);
    }

    let tempdir = match &cfg.workdir {
        Some(dir) => tempfile::Builder::new().prefix("sandbox-").tempdir_in(dir),
        None => tempfile::Builder::new().prefix("sandbox-").tempdir(),
    };
    let tempdir = match tempdir {
        Ok(d) => d,
        Err(e) => return ExecutionResult::harness_error(format!("cannot create sandbox directory: {e}"), elapsed(), cfg.timeout),
    };
    let payload_path = tempdir.path().join("payload.json");
    let shim_path = match &cfg.runner_shim {
        Some(p) => p.clone(),
        None => tempdir.path().join("runner_shim.py"),
    };
    let setup = (|| -> std::io::Result<()> {
        std::fs::write(&payload_path, serde_json::to_vec(payload)?)?;
        if cfg.runner_shim.is_none() {
            std::fs::write(&shim_path, RUNNER_SHIM_SOURCE)?;
        }
        Ok(())
    })();
    if let Err(e) = setup {
        return ExecutionResult::harness_error(format!("cannot write payload: {e}"), elapsed(), cfg.timeout);
    }

    let mut command = Command::new(&cfg.interpreter_command[0]);
    command
        .args(&cfg.interpreter_command[1..])
        .arg(&shim_path)
        .arg(&payload_path)
        .current_dir(tempdir.path())
        .env_clear()
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0);
    for name in &cfg.env_allowlist {
        if let Some(value) = std::env::var_os(name) {
            command.env(name, value);
        }
    }
    command.envs(&cfg.extra_env);

    let mut child = match command.spawn() {
        Ok(c) => c,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return ExecutionResult::harness_error(
                format!("interpreter not found: {}", cfg.interpreter_command[0]),
                elapsed(),
                cfg.timeout,
            )
        }
        Err(e) => return ExecutionResult::harness_error(format!("cannot spawn interpreter: {e}"), elapsed(), cfg.timeout),
    };
    let (stdout_buf, stdout_handle) = spawn_reader(child.stdout.take().expect("piped stdout"));
    let (stderr_buf, stderr_handle) = spawn_reader(child.stderr.take().expect("piped stderr"));

    let deadline = cfg.timeout_duration();
    let exit = loop {
        match child.try_wait() {
            Ok(Some(status)) => break Some(status),
            Ok(None) => {}
            Err(_) => break None,
        }
        let spent = start.elapsed();
        if spent >= deadline {
            break None;
        }
        std::thread::sleep(POLL_INTERVAL.min(deadline - spent));
    };
    // Reap stragglers (e.g. background children) whether or not the leader exited.
    kill_group(&child);
    let exit = match exit {
        Some(status) => Some(status),
        None => {
            let _ = child.wait();
            None
        }
    };
    let _ = stdout_handle.join();
    let _ = stderr_handle.join();
    let wall_time = elapsed();

    let stdout = String::from_utf8_lossy(&stdout_buf.lock().expect("capture lock")).into_owned();
    let stderr = String::from_utf8_lossy(&stderr_buf.lock().expect("capture lock")).into_owned();
    let raw_stderr_tail = char_tail(&stderr, RAW_TAIL_LIMIT);

    let Some(exit) = exit else {
        let mut result = ExecutionResult {
            status: ExecStatus::Timeout,
            error_class: Some("Timeout".into()),
            feedback: String::new(),
            wall_time,
            raw_stdout_tail: char_tail(&stdout, RAW_TAIL_LIMIT),
            raw_stderr_tail,
            diagnostic: String::new(),
            timeout: cfg.timeout,
        };
        result.feedback = extract_feedback(&result, cfg.feedback_limit).unwrap_or_default();
        return result;
    };

    let (program_out, verdict_line) = split_verdict(&stdout);
    let verdict = verdict_line.and_then(|l| serde_json::from_str::<VerdictRecord>(l).ok());
    let mut result = match verdict {
        None => {
            let mut r = ExecutionResult::harness_error(
                format!("runner shim produced no parseable verdict (exit status {exit})"),
                wall_time,
                cfg.timeout,
            );
            r.raw_stdout_tail = char_tail(&stdout, RAW_TAIL_LIMIT);
            r.raw_stderr_tail = raw_stderr_tail;
            r
        }
        Some(verdict) => match classify(&verdict, exit) {
            Err(message) => {
                let mut r = ExecutionResult::harness_error(message, wall_time, cfg.timeout);
                r.raw_stdout_tail = char_tail(&program_out, RAW_TAIL_LIMIT);
                r.raw_stderr_tail = raw_stderr_tail;
                r
            }
            Ok(status) => {
                let diagnostic = match status {
                    ExecStatus::Pass => String::new(),
                    _ => verdict.traceback_tail.clone().unwrap_or_else(|| {
                        format!(
                            "{}: {}",
                            verdict.error_class.as_deref().unwrap_or("Exception"),
                            verdict.message.as_deref().unwrap_or("")
                        )
                    }),
                };
                ExecutionResult {
                    status,
                    error_class: if status == ExecStatus::Pass { None } else { verdict.error_class.clone() },
                    feedback: String::new(),
                    wall_time,
                    raw_stdout_tail: char_tail(&program_out, RAW_TAIL_LIMIT),
                    raw_stderr_tail,
                    diagnostic,
                    timeout: cfg.timeout,
                }
            }
        },
    };
    if result.status != ExecStatus::Pass {
        result.feedback = extract_feedback(&result, cfg.feedback_limit)
            .unwrap_or_else(|_| truncate_tail(&result.diagnostic, cfg.feedback_limit));
    }
    result
}
