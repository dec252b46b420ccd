//! Heterogeneous augmentation: digit mutations on numeric literals and input
//! values, operator/condition rewrites on the token tree, an optional
//! syntax-breaking edit, and gating by the error taxonomy.

mod digits;
mod logical;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{materialize_input, CodeSnippet, ExecutableUnit, InputSpec, RawRecord};
use crate::pylang::{self, LOGICAL_ERROR_NAMES, SYNTAX_ERROR_NAME};
use crate::sandbox::{
    Clock, EnvironmentInfo, ExecutionOutcome, ExecutionStatus, Executor, SandboxError,
};
use crate::seed;

pub use logical::MUTATION_TABLE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorClass {
    None,
    Syntax,
    Logical,
    Unsupported,
}

impl fmt::Display for ErrorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ErrorClass::None => "none",
            ErrorClass::Syntax => "syntax",
            ErrorClass::Logical => "logical",
            ErrorClass::Unsupported => "unsupported",
        };
        f.write_str(s)
    }
}

impl FromStr for ErrorClass {
    type Err = AugmentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(ErrorClass::None),
            "syntax" => Ok(ErrorClass::Syntax),
            "logical" => Ok(ErrorClass::Logical),
            "unsupported" => Ok(ErrorClass::Unsupported),
            other => Err(AugmentError::InvalidPolicy(format!(
                "unknown error class `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("invalid augmentation policy: {0}")]
    InvalidPolicy(String),
    #[error("snippet does not parse: {0}")]
    Parse(#[from] pylang::SyntaxError),
    #[error("no eligible mutation site")]
    NoMutationSite,
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentationPolicy {
    pub digit_enabled: bool,
    pub logical_enabled: bool,
    /// Per-digit replacement probability.
    pub digit_prob: f64,
    pub max_logical_edits: usize,
    pub allowed_error_classes: BTreeSet<ErrorClass>,
    /// Chance of one syntax-breaking deletion when syntax errors are allowed.
    pub syntax_break_prob: f64,
    pub rng_seed: u64,
}

impl Default for AugmentationPolicy {
    fn default() -> Self {
        AugmentationPolicy {
            digit_enabled: true,
            logical_enabled: true,
            digit_prob: 0.3,
            max_logical_edits: 2,
            allowed_error_classes: [ErrorClass::None, ErrorClass::Syntax, ErrorClass::Logical]
                .into(),
            syntax_break_prob: 0.1,
            rng_seed: 17,
        }
    }
}

impl AugmentationPolicy {
    pub fn validate(&self) -> Result<(), AugmentError> {
        if !self.digit_enabled && !self.logical_enabled {
            return Err(AugmentError::InvalidPolicy(
                "enable digit or logical augmentation".into(),
            ));
        }
        for (name, p) in [
            ("digit_prob", self.digit_prob),
            ("syntax_break_prob", self.syntax_break_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(AugmentError::InvalidPolicy(format!(
                    "{name} must lie in [0, 1], got {p}"
                )));
            }
        }
        if self
            .allowed_error_classes
            .contains(&ErrorClass::Unsupported)
        {
            return Err(AugmentError::InvalidPolicy(
                "Unsupported cannot be allowed".into(),
            ));
        }
        Ok(())
    }

    /// Parses a comma-separated error list such as `syntax,logical`. The
    /// no-error class is always included.
    pub fn parse_error_classes(list: &str) -> Result<BTreeSet<ErrorClass>, AugmentError> {
        let mut set: BTreeSet<ErrorClass> = [ErrorClass::None].into();
        for part in list.split(',').filter(|p| !p.trim().is_empty()) {
            set.insert(part.parse()?);
        }
        Ok(set)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditKind {
    Digit,
    Comparison,
    AugAssign,
    UnaryOp,
    BoolOp,
    ConditionNegate,
    SyntaxBreak,
}

/// Which text an edit applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditTarget {
    Source,
    /// Value of the input at this index.
    Input(usize),
}

/// One splice: at byte `offset` of the target (as it stands when this edit
/// is applied), `before` is replaced by `after`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditRecord {
    pub kind: EditKind,
    pub target: EditTarget,
    pub offset: usize,
    pub before: String,
    pub after: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReplayError {
    #[error("edit {index} does not match the text at offset {offset}")]
    Mismatch { index: usize, offset: usize },
    #[error("edit {index} targets missing input {input}")]
    NoSuchInput { index: usize, input: usize },
}

/// Applies `log` in order to a parent's source and inputs.
pub fn apply_edits(
    source: &str,
    inputs: &[InputSpec],
    log: &[EditRecord],
) -> Result<(String, Vec<InputSpec>), ReplayError> {
    let mut source = source.to_string();
    let mut values: Vec<Option<String>> = inputs
        .iter()
        .map(|i| match i {
            InputSpec::NoInput => None,
            other => Some(other.value().to_string()),
        })
        .collect();
    for (index, e) in log.iter().enumerate() {
        let text = match e.target {
            EditTarget::Source => &mut source,
            EditTarget::Input(input) => values
                .get_mut(input)
                .and_then(Option::as_mut)
                .ok_or(ReplayError::NoSuchInput { index, input })?,
        };
        let end = e.offset + e.before.len();
        if text.get(e.offset..end) != Some(e.before.as_str()) {
            return Err(ReplayError::Mismatch {
                index,
                offset: e.offset,
            });
        }
        text.replace_range(e.offset..end, &e.after);
    }
    let inputs = inputs
        .iter()
        .zip(values)
        .map(|(spec, value)| with_value(spec, value))
        .collect();
    Ok((source, inputs))
}

fn with_value(spec: &InputSpec, value: Option<String>) -> InputSpec {
    match (spec, value) {
        (InputSpec::Stdin(_), Some(v)) => InputSpec::Stdin(v),
        (InputSpec::FunctionInput(_), Some(v)) => InputSpec::FunctionInput(v),
        (other, _) => other.clone(),
    }
}

/// A mutated snippet plus the log that derives it from its parent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedSample {
    pub snippet: CodeSnippet,
    pub inputs: Vec<InputSpec>,
    pub edit_log: Vec<EditRecord>,
    pub parent_id: String,
}

impl AugmentedSample {
    /// Rebuilds this sample's source and inputs from the parent record.
    pub fn replay(&self, parent: &RawRecord) -> Result<(String, Vec<InputSpec>), ReplayError> {
        apply_edits(&parent.snippet.source_text, &parent.inputs, &self.edit_log)
    }
}

/// Name of the final raised error in a traceback: the last non-blank,
/// unindented line that is not a traceback header, up to its first `:`.
pub fn final_error_name(stderr_text: &str) -> Option<String> {
    let line = stderr_text.lines().rev().find(|l| {
        !l.trim().is_empty() && !l.starts_with([' ', '\t']) && !l.starts_with("Traceback")
    })?;
    let name = line.split(':').next()?.trim();
    let valid = !name.is_empty()
        && name.split('.').all(|part| {
            part.chars()
                .next()
                .is_some_and(|c| c.is_alphabetic() || c == '_')
                && part.chars().all(|c| c.is_alphanumeric() || c == '_')
        });
    valid.then(|| name.to_string())
}

pub fn classify_error(stderr_text: &str, exit_clean: bool) -> ErrorClass {
    if stderr_text.trim().is_empty() && exit_clean {
        return ErrorClass::None;
    }
    match final_error_name(stderr_text) {
        Some(n) if n == SYNTAX_ERROR_NAME => ErrorClass::Syntax,
        Some(n) if LOGICAL_ERROR_NAMES.contains(&n.as_str()) => ErrorClass::Logical,
        _ => ErrorClass::Unsupported,
    }
}

pub fn classify_outcome(outcome: &ExecutionOutcome) -> ErrorClass {
    classify_error(
        &outcome.stderr_text,
        outcome.status == ExecutionStatus::Clean,
    )
}

/// Digit mutation of source text, seeded from `policy.rng_seed`.
pub fn augment_digits(text: &str, policy: &AugmentationPolicy) -> (String, Vec<EditRecord>) {
    let mut rng = ChaCha8Rng::seed_from_u64(policy.rng_seed);
    digit_pass(text, policy.digit_prob, &mut rng)
}

fn digit_pass<R: Rng>(text: &str, prob: f64, rng: &mut R) -> (String, Vec<EditRecord>) {
    digits::mutate_sites(
        text,
        &digits::source_digit_sites(text),
        prob,
        EditTarget::Source,
        rng,
    )
}

fn input_digit_pass<R: Rng>(
    input: &InputSpec,
    index: usize,
    prob: f64,
    rng: &mut R,
) -> (InputSpec, Vec<EditRecord>) {
    let target = EditTarget::Input(index);
    match input {
        InputSpec::NoInput => (InputSpec::NoInput, Vec::new()),
        InputSpec::Stdin(text) => {
            let (out, edits) =
                digits::mutate_sites(text, &digits::text_digit_sites(text), prob, target, rng);
            (InputSpec::Stdin(out), edits)
        }
        InputSpec::FunctionInput(call) => {
            let (out, edits) =
                digits::mutate_sites(call, &digits::source_digit_sites(call), prob, target, rng);
            (InputSpec::FunctionInput(out), edits)
        }
    }
}

fn input_has_digit_sites(input: &InputSpec) -> bool {
    match input {
        InputSpec::NoInput => false,
        InputSpec::Stdin(t) => !digits::text_digit_sites(t).is_empty(),
        InputSpec::FunctionInput(c) => !digits::source_digit_sites(c).is_empty(),
    }
}

/// Operator and condition mutations, seeded from `policy.rng_seed`.
pub fn augment_logical(
    snippet: &CodeSnippet,
    policy: &AugmentationPolicy,
) -> Result<(CodeSnippet, Vec<EditRecord>), AugmentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(policy.rng_seed);
    let (text, edits) = logical_pass(&snippet.source_text, policy.max_logical_edits, &mut rng)?;
    Ok((snippet.with_source(snippet.id.clone(), text), edits))
}

fn logical_pass<R: Rng>(
    src: &str,
    max_edits: usize,
    rng: &mut R,
) -> Result<(String, Vec<EditRecord>), AugmentError> {
    pylang::check_module(src)?;
    logical::mutate(src, max_edits, rng).ok_or(AugmentError::NoMutationSite)
}

fn syntax_break_pass<R: Rng>(src: &str, rng: &mut R) -> Option<(String, EditRecord)> {
    let sites = logical::syntax_break_sites(src);
    if sites.is_empty() {
        return None;
    }
    let (offset, before) = sites[rng.random_range(0..sites.len())].clone();
    let mut text = src.to_string();
    text.replace_range(offset..offset + before.len(), "");
    let edit = EditRecord {
        kind: EditKind::SyntaxBreak,
        target: EditTarget::Source,
        offset,
        before,
        after: String::new(),
    };
    Some((text, edit))
}

/// Mutates a record per `policy` with the given generator. Digit edits come
/// first (source, then inputs), then logical edits, then the optional
/// syntax break.
pub fn mutate_record<R: Rng>(
    record: &RawRecord,
    policy: &AugmentationPolicy,
    rng: &mut R,
) -> Result<AugmentedSample, AugmentError> {
    let parent = &record.snippet;
    let mut log = Vec::new();
    let mut source = parent.source_text.clone();
    let mut inputs = record.inputs.clone();

    let digit_sites = policy.digit_enabled
        && (!digits::source_digit_sites(&source).is_empty()
            || inputs.iter().any(input_has_digit_sites));
    if policy.digit_enabled {
        let (text, edits) = digit_pass(&source, policy.digit_prob, rng);
        source = text;
        log.extend(edits);
        for (i, input) in inputs.iter_mut().enumerate() {
            let (mutated, edits) = input_digit_pass(input, i, policy.digit_prob, rng);
            *input = mutated;
            log.extend(edits);
        }
    }

    if policy.logical_enabled {
        match logical_pass(&source, policy.max_logical_edits, rng) {
            Ok((text, edits)) => {
                source = text;
                log.extend(edits);
            }
            Err(AugmentError::NoMutationSite) if digit_sites => {}
            Err(e) => return Err(e),
        }
    } else if !digit_sites {
        return Err(AugmentError::NoMutationSite);
    }

    if policy.allowed_error_classes.contains(&ErrorClass::Syntax)
        && policy.syntax_break_prob > 0.0
        && rng.random_bool(policy.syntax_break_prob)
    {
        if let Some((text, edit)) = syntax_break_pass(&source, rng) {
            source = text;
            log.push(edit);
        }
    }

    Ok(AugmentedSample {
        snippet: parent.with_source(format!("{}/aug", parent.id), source),
        inputs,
        edit_log: log,
        parent_id: parent.id.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RejectionReason {
    /// The run's error class is outside the allow-list.
    UnsupportedError,
    ResourceExceeded,
    NoMutationSite,
    /// The record could not be parsed or materialized.
    InvalidInput,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub id: String,
    pub reason: RejectionReason,
    pub detail: String,
}

/// An accepted sample with its ground-truth execution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub sample: AugmentedSample,
    pub unit: ExecutableUnit,
    pub outcome: ExecutionOutcome,
    pub error_class: ErrorClass,
    pub environment: EnvironmentInfo,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Preparation {
    Accepted(Box<TrainingSample>),
    Rejected(Rejection),
}

/// Augments `record`, runs the result, and keeps it iff the run stayed within
/// limits and its error class is allowed. Multi-input records should be split
/// with [`RawRecord::expand_inputs`] first; only the primary input is run.
pub fn prepare_training_sample(
    record: &RawRecord,
    policy: &AugmentationPolicy,
    executor: &dyn Executor,
    clock: &dyn Clock,
) -> Result<Preparation, AugmentError> {
    policy.validate()?;
    let id = record.snippet.id.clone();
    let reject = |reason, detail: String| {
        Ok(Preparation::Rejected(Rejection {
            id: id.clone(),
            reason,
            detail,
        }))
    };

    let mut rng = seed::rng_for(policy.rng_seed, &record.snippet.id);
    let sample = match mutate_record(record, policy, &mut rng) {
        Ok(s) => s,
        Err(AugmentError::NoMutationSite) => {
            return reject(RejectionReason::NoMutationSite, String::new())
        }
        Err(AugmentError::Parse(e)) => return reject(RejectionReason::InvalidInput, e.to_string()),
        Err(e) => return Err(e),
    };
    let input = sample.inputs.first().cloned().unwrap_or_default();
    let unit = match materialize_input(&sample.snippet, &input) {
        Ok(u) => u,
        Err(e) => return reject(RejectionReason::InvalidInput, e.to_string()),
    };

    let (outcome, environment) = executor.run_with_env(&unit, clock)?;
    if outcome.status == ExecutionStatus::SpawnFailed {
        return Err(SandboxError::Infrastructure(outcome.stderr_text).into());
    }
    if outcome.status.exceeded_limits() {
        return reject(
            RejectionReason::ResourceExceeded,
            format!("{:?}", outcome.status),
        );
    }
    let error_class = classify_outcome(&outcome);
    if !policy.allowed_error_classes.contains(&error_class) {
        let name = final_error_name(&outcome.stderr_text).unwrap_or_default();
        return reject(
            RejectionReason::UnsupportedError,
            format!("{error_class}: {name}"),
        );
    }
    Ok(Preparation::Accepted(Box::new(TrainingSample {
        sample,
        unit,
        outcome,
        error_class,
        environment,
    })))
}
