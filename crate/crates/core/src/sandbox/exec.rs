use std::fs;
use std::io::{ErrorKind, Read, Write};
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use super::{snippet_file_name, ExecutionOutcome, ExecutionStatus, SandboxConfig, PROJECT_DIR};
use crate::augment::final_error_name;

const POLL_MIN: Duration = Duration::from_millis(1);
const POLL_MAX: Duration = Duration::from_millis(10);

/// Runs `source_text` with `stdin_text` on its standard input inside
/// `workdir`. Snippet failures are reported through the returned status;
/// only infrastructure problems produce [`ExecutionStatus::SpawnFailed`].
pub fn execute(
    source_text: &str,
    stdin_text: &str,
    config: &SandboxConfig,
    workdir: &Path,
) -> ExecutionOutcome {
    let project = workdir.join(PROJECT_DIR);
    if let Err(e) = prepare_project(&project, source_text) {
        return ExecutionOutcome::spawn_failed(format!("cannot write snippet: {e}"));
    }

    let started = Instant::now();
    let mut child = match spawn(config, &project) {
        Ok(child) => child,
        Err(e) => {
            return ExecutionOutcome::spawn_failed(format!(
                "cannot spawn `{}`: {e}",
                config.interpreter
            ))
        }
    };
    let pgid = child.id() as libc::pid_t;

    let overflow = Arc::new(AtomicBool::new(false));
    let limit = config.limits.max_output_bytes;
    let stdout = reader(child.stdout.take(), limit, Arc::clone(&overflow));
    let stderr = reader(child.stderr.take(), limit, Arc::clone(&overflow));
    let stdin = child.stdin.take().map(|mut pipe| {
        let data = stdin_text.as_bytes().to_vec();
        thread::spawn(move || {
            // The child may exit without reading its input.
            let _ = pipe.write_all(&data);
        })
    });

    let deadline = started + config.limits.timeout;
    let (exit, timed_out) = wait_until(&mut child, deadline, &overflow, pgid);
    // Reap anything the snippet left behind in its group so the pipes close.
    kill_group(pgid);
    let wall_time = started.elapsed();

    if let Some(h) = stdin {
        let _ = h.join();
    }
    let stdout = stdout.join().unwrap_or_default();
    let stderr = stderr.join().unwrap_or_default();

    let rewrite = |bytes: Vec<u8>| rewrite_paths(&String::from_utf8_lossy(&bytes), workdir);
    let stdout_text = rewrite(stdout);
    let stderr_text = rewrite(stderr);

    let exit_code = exit.as_ref().and_then(|s| s.code());
    let signal = exit.as_ref().and_then(|s| s.signal());
    let status = if timed_out {
        ExecutionStatus::Timeout
    } else if overflow.load(Ordering::SeqCst) {
        ExecutionStatus::OutputTruncated
    } else if signal == Some(libc::SIGKILL)
        || final_error_name(&stderr_text).as_deref() == Some("MemoryError")
    {
        ExecutionStatus::MemoryKilled
    } else if exit_code == Some(0) {
        ExecutionStatus::Clean
    } else {
        ExecutionStatus::NonzeroExit
    };

    ExecutionOutcome {
        stdout_text,
        stderr_text,
        status,
        wall_time,
        exit_code,
    }
}

fn prepare_project(project: &Path, source_text: &str) -> std::io::Result<()> {
    match fs::remove_dir_all(project) {
        Ok(()) => {}
        Err(e) if e.kind() == ErrorKind::NotFound => {}
        Err(e) => return Err(e),
    }
    fs::create_dir_all(project)?;
    fs::write(project.join(snippet_file_name()), source_text)
}

fn spawn(config: &SandboxConfig, project: &Path) -> std::io::Result<Child> {
    let mut cmd = Command::new(&config.interpreter);
    cmd.arg(snippet_file_name())
        .current_dir(project)
        .env_clear()
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    if let Ok(path) = std::env::var("PATH") {
        cmd.env("PATH", path);
    }
    let home = project.parent().unwrap_or(project);
    cmd.env("HOME", home)
        .env("LANG", "C.UTF-8")
        .env("LC_ALL", "C.UTF-8")
        .env("TZ", "UTC")
        .env("PYTHONHASHSEED", "0")
        .env("PYTHONDONTWRITEBYTECODE", "1")
        .env("PYTHONIOENCODING", "utf-8")
        .env("MPLBACKEND", "Agg")
        .env("QT_QPA_PLATFORM", "offscreen")
        .env("SDL_VIDEODRIVER", "dummy");

    let memory_cap = config.limits.memory_cap as libc::rlim_t;
    // SAFETY: only async-signal-safe libc calls run between fork and exec.
    unsafe {
        cmd.pre_exec(move || {
            if libc::setpgid(0, 0) != 0 {
                return Err(std::io::Error::last_os_error());
            }
            let as_limit = libc::rlimit {
                rlim_cur: memory_cap,
                rlim_max: memory_cap,
            };
            if libc::setrlimit(libc::RLIMIT_AS, &as_limit) != 0 {
                return Err(std::io::Error::last_os_error());
            }
            let no_core = libc::rlimit {
                rlim_cur: 0,
                rlim_max: 0,
            };
            libc::setrlimit(libc::RLIMIT_CORE, &no_core);
            Ok(())
        });
    }
    cmd.spawn()
}

fn reader<R: Read + Send + 'static>(
    pipe: Option<R>,
    limit: usize,
    overflow: Arc<AtomicBool>,
) -> thread::JoinHandle<Vec<u8>> {
    thread::spawn(move || {
        let mut out = Vec::new();
        let Some(mut pipe) = pipe else {
            return out;
        };
        let mut buf = [0u8; 8192];
        loop {
            match pipe.read(&mut buf) {
                Ok(0) => break,
                Ok(n) => {
                    let room = limit.saturating_sub(out.len());
                    if n > room {
                        out.extend_from_slice(&buf[..room]);
                        overflow.store(true, Ordering::SeqCst);
                    } else {
                        out.extend_from_slice(&buf[..n]);
                    }
                }
                Err(e) if e.kind() == ErrorKind::Interrupted => continue,
                Err(_) => break,
            }
        }
        out
    })
}

/// Polls the child until it exits, the deadline passes, or output overflows.
/// Returns the exit status (if reaped) and whether the deadline fired.
fn wait_until(
    child: &mut Child,
    deadline: Instant,
    overflow: &AtomicBool,
    pgid: libc::pid_t,
) -> (Option<std::process::ExitStatus>, bool) {
    let mut pause = POLL_MIN;
    loop {
        match child.try_wait() {
            Ok(Some(status)) => return (Some(status), false),
            Ok(None) => {}
            Err(_) => {
                kill_group(pgid);
                return (child.wait().ok(), false);
            }
        }
        let now = Instant::now();
        if now >= deadline {
            kill_group(pgid);
            let _ = child.wait();
            return (None, true);
        }
        if overflow.load(Ordering::SeqCst) {
            kill_group(pgid);
            return (child.wait().ok(), false);
        }
        thread::sleep(pause.min(deadline - now));
        pause = (pause * 2).min(POLL_MAX);
    }
}

fn kill_group(pgid: libc::pid_t) {
    // SAFETY: plain syscall; ESRCH when the group is already gone is fine.
    unsafe {
        libc::kill(-pgid, libc::SIGKILL);
    }
}

/// Replaces host-specific absolute paths to the working directory so that
/// captured text refers to `project/main.py`.
fn rewrite_paths(text: &str, workdir: &Path) -> String {
    let mut out = text.to_string();
    let mut prefixes = vec![workdir.to_path_buf()];
    if let Ok(canonical) = workdir.canonicalize() {
        if canonical != workdir {
            prefixes.push(canonical);
        }
    }
    for prefix in prefixes {
        let mut p = prefix.display().to_string();
        if !p.ends_with('/') {
            p.push('/');
        }
        out = out.replace(&p, "");
    }
    out
}
