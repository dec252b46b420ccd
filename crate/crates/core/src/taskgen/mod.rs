//! Forward (predict the outputs) and backward (recover masked lines) task
//! construction with rendered prompts and attached ground truth.

mod mask;
mod prompt;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{classify_outcome, ErrorClass, TrainingSample};
use crate::corpus::InputSpec;
use crate::sandbox::{EnvironmentInfo, ExecutionOutcome};
use crate::seed;

pub use mask::{
    eligible_lines, fill_masks, mask_source, max_mask_count, placeholder, unmask, MaskEntry,
    MaskError, MaskedSource, MAX_MASKS, PLACEHOLDER_PREFIX,
};
pub use prompt::{
    answer_tag, render_inputs, render_prompt, render_template, template_hash, PromptFields,
    RenderError, BACKWARD_TEMPLATE, FORWARD_TEMPLATE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        })
    }
}

#[derive(Debug, Error)]
pub enum TaskError {
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("invalid task mix: {0}")]
    InvalidMix(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub gt_stdout: String,
    pub gt_stderr: String,
    pub error_class: ErrorClass,
}

impl GroundTruth {
    pub fn from_outcome(outcome: &ExecutionOutcome) -> Self {
        GroundTruth {
            gt_stdout: outcome.stdout_text.clone(),
            gt_stderr: outcome.stderr_text.clone(),
            error_class: classify_outcome(outcome),
        }
    }
}

/// A task with everything needed to score it. Ground truth, the mask map and
/// the input are server-side only; see [`TaskView`] for the public part.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub task_id: String,
    pub sample_id: String,
    pub direction: Direction,
    pub prompt_text: String,
    /// Executed source for forward tasks, masked source for backward tasks.
    pub shown_code: String,
    pub inputs_shown: String,
    pub input: InputSpec,
    pub env: EnvironmentInfo,
    pub ground_truth: GroundTruth,
    pub mask_map: Vec<MaskEntry>,
    pub template_hash: String,
}

impl TaskInstance {
    pub fn view(&self) -> TaskView {
        TaskView {
            task_id: self.task_id.clone(),
            direction: self.direction,
            prompt_text: self.prompt_text.clone(),
            shown_code: self.shown_code.clone(),
            inputs_shown: self.inputs_shown.clone(),
            env: self.env.clone(),
            template_hash: self.template_hash.clone(),
        }
    }

    pub fn mask_ids(&self) -> Vec<u32> {
        self.mask_map.iter().map(|m| m.mask_id).collect()
    }

    /// Text piped to standard input when the task's code runs.
    pub fn stdin_text(&self) -> &str {
        match &self.input {
            InputSpec::Stdin(t) => t,
            _ => "",
        }
    }
}

/// What a trainer may see of a task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskView {
    pub task_id: String,
    pub direction: Direction,
    pub prompt_text: String,
    pub shown_code: String,
    pub inputs_shown: String,
    pub env: EnvironmentInfo,
    pub template_hash: String,
}

fn primary_input(sample: &TrainingSample) -> InputSpec {
    sample.sample.inputs.first().cloned().unwrap_or_default()
}

pub fn build_forward_task(sample: &TrainingSample) -> Result<TaskInstance, TaskError> {
    let input = primary_input(sample);
    let inputs_shown = render_inputs(&input);
    let gt = GroundTruth::from_outcome(&sample.outcome);
    let code = sample.unit.source_text.clone();
    let prompt_text = render_prompt(&PromptFields {
        direction: Direction::Forward,
        env: &sample.environment,
        code: &code,
        inputs_shown: &inputs_shown,
        gt_stdout: "",
        gt_stderr: "",
        mask_ids: &[],
    })?;
    let sample_id = sample.sample.snippet.id.clone();
    Ok(TaskInstance {
        task_id: format!("{sample_id}:fwd"),
        sample_id,
        direction: Direction::Forward,
        prompt_text,
        shown_code: code,
        inputs_shown,
        input,
        env: sample.environment.clone(),
        ground_truth: gt,
        mask_map: Vec::new(),
        template_hash: template_hash().to_string(),
    })
}

pub fn build_backward_task(
    sample: &TrainingSample,
    count: usize,
    rng_seed: u64,
) -> Result<TaskInstance, TaskError> {
    let input = primary_input(sample);
    let inputs_shown = render_inputs(&input);
    let gt = GroundTruth::from_outcome(&sample.outcome);
    let masked = mask_source(&sample.unit.source_text, count, rng_seed)?;
    let ids: Vec<u32> = masked.mask_map.iter().map(|m| m.mask_id).collect();
    let prompt_text = render_prompt(&PromptFields {
        direction: Direction::Backward,
        env: &sample.environment,
        code: &masked.masked,
        inputs_shown: &inputs_shown,
        gt_stdout: &gt.gt_stdout,
        gt_stderr: &gt.gt_stderr,
        mask_ids: &ids,
    })?;
    let sample_id = sample.sample.snippet.id.clone();
    Ok(TaskInstance {
        task_id: format!("{sample_id}:bwd"),
        sample_id,
        direction: Direction::Backward,
        prompt_text,
        shown_code: masked.masked,
        inputs_shown,
        input,
        env: sample.environment.clone(),
        ground_truth: gt,
        mask_map: masked.mask_map,
        template_hash: template_hash().to_string(),
    })
}

/// Relative weights of forward and backward tasks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskMix {
    pub forward: f64,
    pub backward: f64,
}

impl Default for TaskMix {
    fn default() -> Self {
        TaskMix {
            forward: 0.5,
            backward: 0.5,
        }
    }
}

impl TaskMix {
    pub fn validate(&self) -> Result<(), TaskError> {
        let ok = |w: f64| w.is_finite() && w >= 0.0;
        if !ok(self.forward) || !ok(self.backward) || self.forward + self.backward <= 0.0 {
            return Err(TaskError::InvalidMix(format!(
                "weights must be non-negative with a positive sum, got forward={} backward={}",
                self.forward, self.backward
            )));
        }
        Ok(())
    }

    pub fn backward_share(&self) -> f64 {
        self.backward / (self.forward + self.backward)
    }
}

impl FromStr for TaskMix {
    type Err = TaskError;

    /// Parses `forward=0.5,backward=0.5`; an omitted direction weighs 0.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut mix = TaskMix {
            forward: 0.0,
            backward: 0.0,
        };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part.split_once('=').ok_or_else(|| {
                TaskError::InvalidMix(format!("expected key=value, got `{part}`"))
            })?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| TaskError::InvalidMix(format!("bad weight `{value}`")))?;
            match key.trim() {
                "forward" => mix.forward = value,
                "backward" => mix.backward = value,
                other => {
                    return Err(TaskError::InvalidMix(format!(
                        "unknown direction `{other}`"
                    )))
                }
            }
        }
        mix.validate()?;
        Ok(mix)
    }
}

/// Builds one task for `sample`, choosing the direction and mask layout from
/// a generator keyed by the sample id. Samples too short to mask become
/// forward tasks.
pub fn generate_task(
    sample: &TrainingSample,
    mix: &TaskMix,
    rng_seed: u64,
) -> Result<TaskInstance, TaskError> {
    let mut rng = seed::rng_for(rng_seed, &sample.sample.snippet.id);
    let backward = rng.random_bool(mix.backward_share().clamp(0.0, 1.0));
    let cap = max_mask_count(eligible_lines(&sample.unit.source_text).len());
    if backward && cap > 0 && !sample.unit.source_text.contains(PLACEHOLDER_PREFIX) {
        let count = rng.random_range(1..=cap);
        build_backward_task(sample, count, rng.random())
    } else {
        build_forward_task(sample)
    }
}
