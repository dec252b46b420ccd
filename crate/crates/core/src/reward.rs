//! Response parsing and rule-based rewards: a format term, hard stdout
//! equality, and Jaccard similarity of stderr line sets.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ExecutableUnit;
use crate::curation::split_lines;
use crate::sandbox::{ExecutionStatus, Executor};
use crate::taskgen::{fill_masks, Direction, GroundTruth, TaskInstance, PLACEHOLDER_PREFIX};

pub const STDOUT_TAG: &str = "answer_stdout";
pub const STDERR_TAG: &str = "answer_stderr";
const MASK_TAG_PREFIX: &str = "answer_";

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("invalid reward config: {0}")]
    InvalidConfig(String),
    #[error("task {task_id} is a {actual} task, expected {expected}")]
    WrongDirection {
        task_id: String,
        expected: Direction,
        actual: Direction,
    },
    /// The sandbox could not run the completed code; retrying may succeed.
    #[error("sandbox failure while scoring: {0}")]
    Sandbox(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    /// Weight of the format term.
    pub w: f64,
    /// Weight of the stderr term relative to stdout.
    pub beta: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig { w: 0.1, beta: 0.5 }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), ScoreError> {
        if !(0.0..=1.0).contains(&self.w) {
            return Err(ScoreError::InvalidConfig(format!(
                "w must lie in [0, 1], got {}",
                self.w
            )));
        }
        // beta above 1 would let r exceed 1
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(ScoreError::InvalidConfig(format!(
                "beta must lie in [0, 1], got {}",
                self.beta
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedResponse {
    pub format_ok: bool,
    pub pred_stdout: String,
    pub pred_stderr: String,
    pub fills: BTreeMap<u32, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_format: u8,
    pub r_o: u8,
    pub r_e: f64,
    pub r: f64,
}

impl RewardBreakdown {
    pub const ZERO: RewardBreakdown = RewardBreakdown {
        r_format: 0,
        r_o: 0,
        r_e: 0.0,
        r: 0.0,
    };
}

struct Block<'a> {
    tag: &'a str,
    body: String,
}

/// Fenced blocks with a tag on the opening fence. Returns `None` when a
/// fence is left open.
fn fenced_blocks(text: &str) -> Option<Vec<Block<'_>>> {
    let mut blocks = Vec::new();
    let mut lines = text.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l));
    while let Some(line) = lines.next() {
        let Some(rest) = line.trim_start().strip_prefix("```") else {
            continue;
        };
        let tag = rest.trim();
        let mut body = Vec::new();
        let mut closed = false;
        for inner in lines.by_ref() {
            if inner.trim() == "```" {
                closed = true;
                break;
            }
            body.push(inner);
        }
        if !closed {
            return None;
        }
        blocks.push(Block {
            tag,
            body: body.join("\n"),
        });
    }
    Some(blocks)
}

fn failed() -> ParsedResponse {
    ParsedResponse::default()
}

pub fn parse_response(
    text: &str,
    direction: Direction,
    expected_mask_ids: &[u32],
) -> ParsedResponse {
    let Some(blocks) = fenced_blocks(text) else {
        return failed();
    };
    match direction {
        Direction::Forward => {
            let pick = |tag: &str| {
                let mut found = blocks.iter().filter(|b| b.tag == tag);
                match (found.next(), found.next()) {
                    (Some(b), None) => Some(b.body.clone()),
                    _ => None,
                }
            };
            match (pick(STDOUT_TAG), pick(STDERR_TAG)) {
                (Some(pred_stdout), Some(pred_stderr)) => ParsedResponse {
                    format_ok: true,
                    pred_stdout,
                    pred_stderr,
                    fills: BTreeMap::new(),
                },
                _ => failed(),
            }
        }
        Direction::Backward => {
            let mut fills = BTreeMap::new();
            for b in &blocks {
                let Some(name) = b.tag.strip_prefix(MASK_TAG_PREFIX) else {
                    continue;
                };
                let Some(id) = name.strip_prefix(PLACEHOLDER_PREFIX) else {
                    continue;
                };
                let Ok(id) = id.parse::<u32>() else {
                    return failed();
                };
                if !expected_mask_ids.contains(&id) || fills.insert(id, b.body.clone()).is_some() {
                    return failed();
                }
            }
            if fills.len() != expected_mask_ids.len() {
                return failed();
            }
            ParsedResponse {
                format_ok: true,
                fills,
                ..ParsedResponse::default()
            }
        }
    }
}

fn strip_one_newline(s: &str) -> &str {
    s.strip_suffix('\n').unwrap_or(s)
}

pub fn stdout_reward(pred_o: &str, gt_o: &str) -> u8 {
    u8::from(strip_one_newline(pred_o) == strip_one_newline(gt_o))
}

/// Jaccard index of the two line sets; two empty sets score 1.
pub fn stderr_reward(pred_e: &str, gt_e: &str) -> f64 {
    let (a, b) = (split_lines(pred_e), split_lines(gt_e));
    let union = a.union_len(&b);
    if union == 0 {
        return 1.0;
    }
    a.intersection_len(&b) as f64 / union as f64
}

pub fn combine(r_format: u8, r_o: u8, r_e: f64, config: &RewardConfig) -> f64 {
    config.w * f64::from(r_format) + (1.0 - config.w) * (f64::from(r_o) + config.beta * r_e) / 2.0
}

pub fn total_reward(
    parsed: &ParsedResponse,
    gt: &GroundTruth,
    config: &RewardConfig,
) -> RewardBreakdown {
    if !parsed.format_ok {
        return RewardBreakdown::ZERO;
    }
    let r_o = stdout_reward(&parsed.pred_stdout, &gt.gt_stdout);
    let r_e = stderr_reward(&parsed.pred_stderr, &gt.gt_stderr);
    RewardBreakdown {
        r_format: 1,
        r_o,
        r_e,
        r: combine(1, r_o, r_e, config),
    }
}

fn expect_direction(task: &TaskInstance, expected: Direction) -> Result<(), ScoreError> {
    if task.direction != expected {
        return Err(ScoreError::WrongDirection {
            task_id: task.task_id.clone(),
            expected,
            actual: task.direction,
        });
    }
    Ok(())
}

/// Scores a forward answer against the stored ground truth; nothing runs.
pub fn score_forward(
    response_text: &str,
    task: &TaskInstance,
    config: &RewardConfig,
) -> Result<RewardBreakdown, ScoreError> {
    expect_direction(task, Direction::Forward)?;
    let parsed = parse_response(response_text, Direction::Forward, &[]);
    Ok(total_reward(&parsed, &task.ground_truth, config))
}

/// Fills the masked lines, runs the completed code once with the task's
/// input, and scores the captured streams.
pub fn score_backward(
    response_text: &str,
    task: &TaskInstance,
    config: &RewardConfig,
    executor: &dyn Executor,
) -> Result<RewardBreakdown, ScoreError> {
    expect_direction(task, Direction::Backward)?;
    let parsed = parse_response(response_text, Direction::Backward, &task.mask_ids());
    if !parsed.format_ok {
        return Ok(RewardBreakdown::ZERO);
    }
    let fills: Vec<(u32, String)> = parsed.fills.into_iter().collect();
    let completed = fill_masks(&task.shown_code, &task.mask_map, &fills)
        .expect("parse_response only admits ids from the mask map");
    let outcome = executor.run(&ExecutableUnit {
        source_text: completed,
        stdin_text: task.stdin_text().to_string(),
    });
    if outcome.status == ExecutionStatus::SpawnFailed {
        return Err(ScoreError::Sandbox(outcome.stderr_text));
    }
    let r_o = if outcome.status.exceeded_limits() {
        0
    } else {
        stdout_reward(&outcome.stdout_text, &task.ground_truth.gt_stdout)
    };
    let r_e = stderr_reward(&outcome.stderr_text, &task.ground_truth.gt_stderr);
    Ok(RewardBreakdown {
        r_format: 1,
        r_o,
        r_e,
        r: combine(1, r_o, r_e, config),
    })
}

/// Dispatches on the task's direction.
pub fn score_task(
    response_text: &str,
    task: &TaskInstance,
    config: &RewardConfig,
    executor: &dyn Executor,
) -> Result<RewardBreakdown, ScoreError> {
    match task.direction {
        Direction::Forward => score_forward(response_text, task, config),
        Direction::Backward => score_backward(response_text, task, config, executor),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub task_id: String,
    pub response_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub task_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_id: Option<String>,
    #[serde(flatten)]
    pub breakdown: RewardBreakdown,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::ErrorClass;

    fn gt(out: &str, err: &str) -> GroundTruth {
        GroundTruth {
            gt_stdout: out.into(),
            gt_stderr: err.into(),
            error_class: ErrorClass::None,
        }
    }

    fn forward(out: &str, err: &str) -> String {
        format!(
            "Reasoning first.\n\n```answer_stdout\n{out}\n```\n\n```answer_stderr\n{err}\n```\n"
        )
    }

    #[test]
    fn parse_forward_golden() {
        let p = parse_response(&forward("hi\nthere", ""), Direction::Forward, &[]);
        assert!(p.format_ok);
        assert_eq!(p.pred_stdout, "hi\nthere");
        assert_eq!(p.pred_stderr, "");
    }

    #[test]
    fn parse_forward_failures() {
        let missing = "```answer_stdout\nhi\n```\n";
        assert!(!parse_response(missing, Direction::Forward, &[]).format_ok);
        let twice = format!("{}{}", forward("a", ""), forward("a", ""));
        assert!(!parse_response(&twice, Direction::Forward, &[]).format_ok);
        let open = "```answer_stdout\nhi\n```\n```answer_stderr\n";
        assert_eq!(
            parse_response(open, Direction::Forward, &[]),
            ParsedResponse::default()
        );
    }

    #[test]
    fn other_fences_ignored() {
        let text = format!("```python\nprint('x')\n```\n{}", forward("x", ""));
        assert!(parse_response(&text, Direction::Forward, &[]).format_ok);
    }

    #[test]
    fn parse_backward() {
        let ok = "```answer_MASKED_LINE_0\n    a = 1\n```\n```answer_MASKED_LINE_1\nb = 2\n```";
        let p = parse_response(ok, Direction::Backward, &[0, 1]);
        assert!(p.format_ok);
        assert_eq!(p.fills[&0], "    a = 1");
        let dup = "```answer_MASKED_LINE_0\na\n```\n```answer_MASKED_LINE_0\nb\n```";
        assert!(!parse_response(dup, Direction::Backward, &[0]).format_ok);
        let extra = "```answer_MASKED_LINE_0\na\n```\n```answer_MASKED_LINE_4\nb\n```";
        assert!(!parse_response(extra, Direction::Backward, &[0]).format_ok);
        let missing = "```answer_MASKED_LINE_0\na\n```";
        assert!(!parse_response(missing, Direction::Backward, &[0, 1]).format_ok);
    }

    #[test]
    fn stdout_examples() {
        assert_eq!(stdout_reward("hi\n", "hi\n"), 1);
        assert_eq!(stdout_reward("hi", "hi\n"), 1);
        assert_eq!(stdout_reward("hi ", "hi"), 0);
        assert_eq!(stdout_reward("hi\n\n", "hi"), 0);
    }

    #[test]
    fn stderr_examples() {
        assert_eq!(stderr_reward("a\nb\n", "b\nc\n"), 1.0 / 3.0);
        assert_eq!(stderr_reward("x\n", "x\n"), 1.0);
        assert_eq!(stderr_reward("", ""), 1.0);
        assert_eq!(stderr_reward("", "x"), 0.0);
    }

    #[test]
    fn canonical_rewards() {
        let c = RewardConfig::default();
        let truth = gt("1\n", "ValueError: x\n");
        let cases = [
            ("garbage".to_string(), 0.0),
            (forward("2", "nope"), 0.1),
            (forward("2", "ValueError: x"), 0.325),
            (forward("1", "ValueError: x"), 0.775),
        ];
        for (text, want) in cases {
            let b = total_reward(&parse_response(&text, Direction::Forward, &[]), &truth, &c);
            assert!((b.r - want).abs() < 1e-12, "{text:?}: {} != {want}", b.r);
        }
    }

    #[test]
    fn config_validation() {
        RewardConfig::default().validate().unwrap();
        assert!(RewardConfig { w: 1.5, beta: 0.5 }.validate().is_err());
        assert!(RewardConfig { w: 0.1, beta: 2.0 }.validate().is_err());
    }

    #[test]
    fn response_wire_shape() {
        let r = ScoreResponse {
            task_id: "t".into(),
            group_id: Some("g".into()),
            breakdown: RewardBreakdown {
                r_format: 1,
                r_o: 1,
                r_e: 1.0,
                r: 0.775,
            },
        };
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["r"], 0.775);
        assert_eq!(json["group_id"], "g");
        let back: ScoreResponse = serde_json::from_value(json).unwrap();
        assert_eq!(back, r);
    }
}
