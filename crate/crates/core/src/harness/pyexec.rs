//! Child-process execution of reference programs.
//!
//! Programs run under `python3 -I` in a fresh temporary working directory
//! with a hard wall-clock timeout. Batch drivers evaluate many inputs per
//! process, which keeps oracle-equivalence sweeps (hundreds of inputs per
//! problem) well inside their time budgets.

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use super::literal::Value;

#[derive(Debug, thiserror::Error)]
pub enum PyError {
    #[error("python interpreter unavailable: {detail}")]
    ToolchainMissing { detail: String },
    #[error("execution timed out after {seconds:.1} s")]
    Timeout { seconds: f64 },
    #[error("python exited with status {status}: {stderr}")]
    Runtime { status: i32, stderr: String },
    #[error("driver protocol violation: {detail}")]
    Protocol { detail: String },
}

/// Raw process result before protocol interpretation.
struct RawOutput {
    stdout: String,
    stderr: String,
}

fn run_python(script: &str, stdin_data: &str, timeout: Duration) -> Result<RawOutput, PyError> {
    let workdir = tempfile::tempdir().map_err(|e| PyError::ToolchainMissing {
        detail: format!("cannot create working directory: {e}"),
    })?;
    let script_path = workdir.path().join("driver.py");
    std::fs::write(&script_path, script).map_err(|e| PyError::ToolchainMissing {
        detail: format!("cannot write driver: {e}"),
    })?;
    let mut child = Command::new("python3")
        .arg("-I")
        .arg(&script_path)
        .current_dir(workdir.path())
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| PyError::ToolchainMissing {
            detail: format!("cannot spawn python3: {e}"),
        })?;

    let mut stdin_pipe = child.stdin.take().expect("stdin piped");
    let stdin_owned = stdin_data.to_string();
    let writer = std::thread::spawn(move || {
        let _ = stdin_pipe.write_all(stdin_owned.as_bytes());
        // Dropping the pipe closes it, signalling EOF to the child.
    });
    let mut stdout_pipe = child.stdout.take().expect("stdout piped");
    let stdout_reader = std::thread::spawn(move || {
        let mut buf = String::new();
        let _ = stdout_pipe.read_to_string(&mut buf);
        buf
    });
    let mut stderr_pipe = child.stderr.take().expect("stderr piped");
    let stderr_reader = std::thread::spawn(move || {
        let mut buf = String::new();
        let _ = stderr_pipe.read_to_string(&mut buf);
        buf
    });

    let deadline = Instant::now() + timeout;
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break status,
            Ok(None) => {
                if Instant::now() >= deadline {
                    let _ = child.kill();
                    let _ = child.wait();
                    let _ = writer.join();
                    let _ = stdout_reader.join();
                    let _ = stderr_reader.join();
                    return Err(PyError::Timeout {
                        seconds: timeout.as_secs_f64(),
                    });
                }
                std::thread::sleep(Duration::from_millis(5));
            }
            Err(e) => {
                return Err(PyError::Protocol {
                    detail: format!("wait failed: {e}"),
                })
            }
        }
    };
    let _ = writer.join();
    let stdout = stdout_reader.join().unwrap_or_default();
    let stderr = stderr_reader.join().unwrap_or_default();
    // The temp path varies per run; scrub it so error details stay
    // byte-stable across replays.
    let stderr = stderr.replace(&workdir.path().display().to_string(), "<workdir>");
    let code = status.code().unwrap_or(-1);
    if code != 0 {
        return Err(PyError::Runtime {
            status: code,
            stderr: stderr.chars().take(2000).collect(),
        });
    }
    Ok(RawOutput { stdout, stderr })
}

fn python_str_list(sources: &[&str]) -> String {
    let items: Vec<String> = sources
        .iter()
        .map(|s| Value::Str(s.to_string()).to_string())
        .collect();
    format!("[{}]", items.join(", "))
}

/// Apply a chain of single-function sources to each input literal, inside
/// one interpreter: composition happens in-process, one repr per line.
pub fn run_value_chain(
    sources: &[&str],
    input_literals: &[String],
    timeout: Duration,
) -> Result<Vec<String>, PyError> {
    let script = format!(
        r#"import ast, sys, types

SOURCES = {sources}

def load(src):
    ns = {{}}
    exec(src, ns)
    fns = [v for v in ns.values() if isinstance(v, types.FunctionType)]
    if len(fns) != 1:
        raise RuntimeError('expected exactly one function, got %d' % len(fns))
    return fns[0]

funcs = [load(s) for s in SOURCES]
for line in sys.stdin:
    line = line.rstrip('\n')
    if not line:
        continue
    value = ast.literal_eval(line)
    for fn in funcs:
        value = fn(value)
    print(repr(value))
"#,
        sources = python_str_list(sources)
    );
    let stdin_data = input_literals
        .iter()
        .map(|l| l.replace('\n', " "))
        .collect::<Vec<_>>()
        .join("\n")
        + "\n";
    let raw = run_python(&script, &stdin_data, timeout)?;
    let lines: Vec<String> = raw.stdout.lines().map(|l| l.to_string()).collect();
    if lines.len() != input_literals.len() {
        return Err(PyError::Protocol {
            detail: format!(
                "expected {} output lines, got {} (stderr: {})",
                input_literals.len(),
                lines.len(),
                raw.stderr.chars().take(500).collect::<String>()
            ),
        });
    }
    Ok(lines)
}

/// One stage of the manual route: a single function applied to a batch of
/// literals in its own process. Chaining stage outputs through this runner
/// crosses a serialization boundary between every pair of stages.
pub fn run_value_stage(
    source: &str,
    input_literals: &[String],
    timeout: Duration,
) -> Result<Vec<String>, PyError> {
    run_value_chain(&[source], input_literals, timeout)
}

/// Run one stdio program on a batch of stdin payloads in a single
/// interpreter. Returns captured stdout per payload.
pub fn run_stdio_stage(
    source: &str,
    stdin_payloads: &[String],
    timeout: Duration,
) -> Result<Vec<String>, PyError> {
    run_stdio_chain(&[source], stdin_payloads, timeout)
}

/// Pipe a chain of stdio programs in-process: each payload flows through
/// every program, stdout to stdin.
pub fn run_stdio_chain(
    sources: &[&str],
    stdin_payloads: &[String],
    timeout: Duration,
) -> Result<Vec<String>, PyError> {
    let script = format!(
        r#"import io, json, sys
from contextlib import redirect_stdout

SOURCES = {sources}
payloads = json.load(sys.stdin)
outs = []
for data in payloads:
    cur = data
    for src in SOURCES:
        sys.stdin = io.StringIO(cur)
        buf = io.StringIO()
        with redirect_stdout(buf):
            ns = {{'__name__': '__main__'}}
            exec(src, ns)
        cur = buf.getvalue()
    outs.append(cur)
sys.stdout.write(json.dumps(outs))
"#,
        sources = python_str_list(sources)
    );
    let stdin_data = serde_json::to_string(stdin_payloads).expect("payloads serialize");
    let raw = run_python(&script, &stdin_data, timeout)?;
    serde_json::from_str(&raw.stdout).map_err(|e| PyError::Protocol {
        detail: format!("driver emitted invalid JSON: {e}"),
    })
}

/// Whether a toolchain for the given language identifier is available.
/// Only Python is wired up; everything else reports missing.
pub fn toolchain_available(language: &str) -> bool {
    match language.to_ascii_lowercase().as_str() {
        "python" => python_available(),
        _ => false,
    }
}

fn python_available() -> bool {
    static AVAILABLE: std::sync::OnceLock<bool> = std::sync::OnceLock::new();
    *AVAILABLE.get_or_init(|| {
        Command::new("python3")
            .arg("--version")
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .status()
            .map(|s| s.success())
            .unwrap_or(false)
    })
}
