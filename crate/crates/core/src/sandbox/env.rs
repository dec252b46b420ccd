use std::fs;
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use super::{run_command, SandboxError};

/// Time source for prompt timestamps.
pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FixedClock(pub DateTime<Utc>);

impl FixedClock {
    pub fn parse(iso: &str) -> Result<Self, chrono::ParseError> {
        Ok(FixedClock(
            DateTime::parse_from_rfc3339(iso)?.with_timezone(&Utc),
        ))
    }
}

impl Clock for FixedClock {
    fn now(&self) -> DateTime<Utc> {
        self.0
    }
}

/// What the model is told about where and when the snippet ran.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvironmentInfo {
    pub project_tree: String,
    pub snippet_path: String,
    pub run_command: String,
    pub timestamp: String,
}

/// Lists `workdir` as sorted relative paths, one per line; directories end
/// with `/`.
pub fn render_tree(workdir: &Path) -> std::io::Result<String> {
    let mut entries = Vec::new();
    collect(workdir, "", &mut entries)?;
    entries.sort();
    Ok(entries.join("\n"))
}

fn collect(dir: &Path, prefix: &str, out: &mut Vec<String>) -> std::io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let rel = format!("{prefix}{name}");
        if entry.file_type()?.is_dir() {
            out.push(format!("{rel}/"));
            collect(&entry.path(), &format!("{rel}/"), out)?;
        } else {
            out.push(rel);
        }
    }
    Ok(())
}

pub fn snapshot_environment(
    workdir: &Path,
    snippet_path: &str,
    interpreter: &str,
    clock: &dyn Clock,
) -> Result<EnvironmentInfo, SandboxError> {
    Ok(EnvironmentInfo {
        project_tree: render_tree(workdir)?,
        snippet_path: snippet_path.to_string(),
        run_command: run_command(interpreter),
        timestamp: clock.now().to_rfc3339_opts(SecondsFormat::Secs, true),
    })
}
