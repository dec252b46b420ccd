//! Resource-limited execution of snippets in child interpreter processes.
//!
//! Each run writes the snippet to `project/main.py` inside a private working
//! directory and runs `python3 main.py` from `project/`, the equivalent of
//! `cd project && python3 main.py`. The child gets its own process group so
//! the whole tree can be killed at the deadline, an address-space limit, and
//! a scrubbed environment with no display.

mod env;
mod exec;

use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ExecutableUnit;
use crate::pylang;

pub use env::{render_tree, snapshot_environment, Clock, EnvironmentInfo, FixedClock, SystemClock};
pub use exec::execute;

/// Directory holding the snippet, relative to the working directory.
pub const PROJECT_DIR: &str = "project";

pub fn snippet_file_name() -> String {
    format!("main.{}", pylang::EXTENSION)
}

/// Designated snippet path relative to the working directory.
pub fn snippet_path() -> String {
    format!("{PROJECT_DIR}/{}", snippet_file_name())
}

pub fn run_command(interpreter: &str) -> String {
    format!("cd {PROJECT_DIR} && {interpreter} {}", snippet_file_name())
}

#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("sandbox infrastructure failure: {0}")]
    Infrastructure(String),
    #[error("invalid resource limits: {0}")]
    InvalidLimits(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResourceLimits {
    #[serde(with = "secs")]
    pub timeout: Duration,
    /// Address-space limit of the child, in bytes.
    pub memory_cap: u64,
    /// Per-stream capture limit; exceeding it ends the run as truncated.
    pub max_output_bytes: usize,
}

mod secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        Duration::try_from_secs_f64(v).map_err(serde::de::Error::custom)
    }
}

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(5);
pub const DEFAULT_MEMORY_CAP: u64 = 8 * 1024 * 1024 * 1024;
pub const DEFAULT_MAX_OUTPUT_BYTES: usize = 1024 * 1024;

impl Default for ResourceLimits {
    fn default() -> Self {
        ResourceLimits {
            timeout: DEFAULT_TIMEOUT,
            memory_cap: DEFAULT_MEMORY_CAP,
            max_output_bytes: DEFAULT_MAX_OUTPUT_BYTES,
        }
    }
}

impl ResourceLimits {
    pub fn validate(&self) -> Result<(), SandboxError> {
        if self.timeout.is_zero() {
            return Err(SandboxError::InvalidLimits(
                "timeout must be positive".into(),
            ));
        }
        if self.memory_cap == 0 {
            return Err(SandboxError::InvalidLimits(
                "memory_cap must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Defaults overridden by `CODEFORGE_TIMEOUT_SECS` and `CODEFORGE_MEM_BYTES`.
    pub fn from_env() -> Result<Self, SandboxError> {
        let mut limits = ResourceLimits::default();
        if let Ok(v) = std::env::var("CODEFORGE_TIMEOUT_SECS") {
            let secs: f64 = v
                .parse()
                .map_err(|_| SandboxError::InvalidLimits(format!("CODEFORGE_TIMEOUT_SECS={v}")))?;
            limits.timeout = Duration::try_from_secs_f64(secs)
                .map_err(|_| SandboxError::InvalidLimits(format!("CODEFORGE_TIMEOUT_SECS={v}")))?;
        }
        if let Ok(v) = std::env::var("CODEFORGE_MEM_BYTES") {
            limits.memory_cap = v
                .parse()
                .map_err(|_| SandboxError::InvalidLimits(format!("CODEFORGE_MEM_BYTES={v}")))?;
        }
        limits.validate()?;
        Ok(limits)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ExecutionStatus {
    Clean,
    NonzeroExit,
    Timeout,
    MemoryKilled,
    OutputTruncated,
    SpawnFailed,
}

impl ExecutionStatus {
    /// Runs that hit a resource limit and must not become ground truth.
    pub fn exceeded_limits(self) -> bool {
        matches!(
            self,
            ExecutionStatus::Timeout
                | ExecutionStatus::MemoryKilled
                | ExecutionStatus::OutputTruncated
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub stdout_text: String,
    pub stderr_text: String,
    pub status: ExecutionStatus,
    /// Not serialized: it varies run to run.
    #[serde(skip)]
    pub wall_time: Duration,
    pub exit_code: Option<i32>,
}

impl ExecutionOutcome {
    pub(crate) fn spawn_failed(message: String) -> Self {
        ExecutionOutcome {
            stdout_text: String::new(),
            stderr_text: message,
            status: ExecutionStatus::SpawnFailed,
            wall_time: Duration::ZERO,
            exit_code: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SandboxConfig {
    pub limits: ResourceLimits,
    /// Interpreter command; resolved through `PATH`.
    pub interpreter: String,
    /// Concurrent execution slots; 0 means one per logical CPU.
    pub slots: usize,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        SandboxConfig {
            limits: ResourceLimits::default(),
            interpreter: pylang::DEFAULT_INTERPRETER.to_string(),
            slots: 0,
        }
    }
}

impl SandboxConfig {
    /// Defaults overridden by the `CODEFORGE_*` environment variables.
    pub fn from_env() -> Result<Self, SandboxError> {
        Ok(SandboxConfig {
            limits: ResourceLimits::from_env()?,
            interpreter: std::env::var("CODEFORGE_INTERP")
                .unwrap_or_else(|_| pylang::DEFAULT_INTERPRETER.into()),
            slots: 0,
        })
    }

    pub fn effective_slots(&self) -> usize {
        if self.slots > 0 {
            self.slots
        } else {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        }
    }
}

/// Something that can run an executable unit and report what happened.
pub trait Executor: Send + Sync {
    fn run(&self, unit: &ExecutableUnit) -> ExecutionOutcome;

    /// Runs and also snapshots the environment the run saw.
    fn run_with_env(
        &self,
        unit: &ExecutableUnit,
        clock: &dyn Clock,
    ) -> Result<(ExecutionOutcome, EnvironmentInfo), SandboxError>;

    fn limits(&self) -> &ResourceLimits;
}

/// A bounded pool of execution slots, each with a private working directory.
pub struct Sandbox {
    config: SandboxConfig,
    _root: tempfile::TempDir,
    free: Mutex<Vec<PathBuf>>,
    available: Condvar,
}

impl std::fmt::Debug for Sandbox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Sandbox")
            .field("config", &self.config)
            .finish()
    }
}

struct SlotGuard<'a> {
    sandbox: &'a Sandbox,
    dir: Option<PathBuf>,
}

impl SlotGuard<'_> {
    fn dir(&self) -> &Path {
        self.dir.as_deref().expect("slot held")
    }
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        if let Some(dir) = self.dir.take() {
            let mut free = self.sandbox.free.lock().unwrap_or_else(|e| e.into_inner());
            free.push(dir);
            self.sandbox.available.notify_one();
        }
    }
}

impl Sandbox {
    pub fn new(config: SandboxConfig) -> Result<Self, SandboxError> {
        config.limits.validate()?;
        let root = tempfile::Builder::new()
            .prefix("codeforge-sandbox-")
            .tempdir()?;
        let slots = config.effective_slots();
        let mut dirs = Vec::with_capacity(slots);
        for i in (0..slots).rev() {
            let dir = root.path().join(format!("slot-{i}"));
            std::fs::create_dir_all(&dir)?;
            dirs.push(dir);
        }
        Ok(Sandbox {
            config,
            _root: root,
            free: Mutex::new(dirs),
            available: Condvar::new(),
        })
    }

    pub fn config(&self) -> &SandboxConfig {
        &self.config
    }

    pub fn slot_count(&self) -> usize {
        self.config.effective_slots()
    }

    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        loop {
            if let Some(dir) = free.pop() {
                return SlotGuard {
                    sandbox: self,
                    dir: Some(dir),
                };
            }
            free = self.available.wait(free).unwrap_or_else(|e| e.into_inner());
        }
    }
}

impl Executor for Sandbox {
    fn run(&self, unit: &ExecutableUnit) -> ExecutionOutcome {
        let slot = self.acquire();
        execute(
            &unit.source_text,
            &unit.stdin_text,
            &self.config,
            slot.dir(),
        )
    }

    fn run_with_env(
        &self,
        unit: &ExecutableUnit,
        clock: &dyn Clock,
    ) -> Result<(ExecutionOutcome, EnvironmentInfo), SandboxError> {
        let slot = self.acquire();
        let outcome = execute(
            &unit.source_text,
            &unit.stdin_text,
            &self.config,
            slot.dir(),
        );
        let env =
            snapshot_environment(slot.dir(), &snippet_path(), &self.config.interpreter, clock)?;
        Ok((outcome, env))
    }

    fn limits(&self) -> &ResourceLimits {
        &self.config.limits
    }
}
