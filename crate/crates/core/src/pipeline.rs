//! End-to-end driver: ingest, curate, augment, and build tasks, writing a
//! JSON Lines artifact per stage and a manifest of counts and seeds.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{
    prepare_training_sample, AugmentError, AugmentationPolicy, Preparation, Rejection,
    TrainingSample,
};
use crate::corpus::{
    basic_filter, load_corpus, materialize_input, CorpusError, FilterConfig, FilterReason,
    RawRecord,
};
use crate::curation::{curate_counted, CurationConfig, CurationError};
use crate::jsonl::{self, JsonlError};
use crate::par::{self, Parallelism};
use crate::reward::{score_task, RewardConfig, ScoreError, ScoreRequest, ScoreResponse};
use crate::sandbox::{
    Clock, Executor, FixedClock, Sandbox, SandboxConfig, SandboxError, SystemClock,
};
use crate::seed::derive_seed;
use crate::taskgen::{generate_task, template_hash, Direction, TaskError, TaskInstance, TaskMix};

pub const INGESTED_FILE: &str = "ingested.jsonl";
pub const CURATED_FILE: &str = "curated.jsonl";
pub const SAMPLES_FILE: &str = "samples.jsonl";
pub const REJECTIONS_FILE: &str = "rejections.jsonl";
pub const TASKS_FILE: &str = "tasks.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Timestamp shown in prompts unless the config says otherwise.
pub const DEFAULT_TIMESTAMP: &str = "2025-01-01T00:00:00Z";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Config,
    Ingest,
    Curate,
    Augment,
    Tasks,
    Manifest,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok();
        f.write_str(s.as_ref().and_then(|v| v.as_str()).unwrap_or("?"))
    }
}

#[derive(Debug, Error)]
pub enum StageFailure {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Curation(#[from] CurationError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error("{0}")]
    Other(String),
}

#[derive(Debug, Error)]
#[error("{stage} stage failed: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: StageFailure,
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, PipelineError>;
}

impl<T, E: Into<StageFailure>> AtStage<T> for Result<T, E> {
    fn at(self, stage: Stage) -> Result<T, PipelineError> {
        self.map_err(|e| PipelineError {
            stage,
            source: e.into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus: Vec<PathBuf>,
    pub output_dir: PathBuf,
    /// Master seed. When set, every stage seed is derived from it and the
    /// per-stage `rng_seed` values are ignored.
    pub seed: Option<u64>,
    /// RFC 3339 instant shown as the execution time, or `now`.
    pub timestamp: String,
    pub parallelism: Parallelism,
    pub filter: FilterConfig,
    pub curation: CurationConfig,
    pub augmentation: AugmentationPolicy,
    pub tasks: TaskMixConfig,
    pub reward: RewardConfig,
    pub sandbox: SandboxConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskMixConfig {
    #[serde(flatten)]
    pub mix: TaskMix,
    pub rng_seed: u64,
}

impl Default for TaskMixConfig {
    fn default() -> Self {
        TaskMixConfig {
            mix: TaskMix::default(),
            rng_seed: 17,
        }
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            corpus: Vec::new(),
            output_dir: PathBuf::from("out"),
            seed: None,
            timestamp: DEFAULT_TIMESTAMP.to_string(),
            parallelism: Parallelism::default(),
            filter: FilterConfig::default(),
            curation: CurationConfig::default(),
            augmentation: AugmentationPolicy::default(),
            tasks: TaskMixConfig::default(),
            reward: RewardConfig::default(),
            sandbox: SandboxConfig::default(),
        }
    }
}

/// Seeds each stage actually uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSeeds {
    pub curation: u64,
    pub augmentation: u64,
    pub tasks: u64,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text)
            .map_err(|e| StageFailure::Other(e.to_string()))
            .at(Stage::Config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is representable in TOML")
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| StageFailure::Other(format!("{}: {e}", path.display())))
            .at(Stage::Config)?;
        let mut config = Self::from_toml(&text)?;
        // Relative paths in the file are relative to the file.
        if let Some(base) = path.parent() {
            for p in config
                .corpus
                .iter_mut()
                .chain(std::iter::once(&mut config.output_dir))
            {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let fail = |m: String| Err(StageFailure::Other(m)).at(Stage::Config);
        if self.corpus.is_empty() {
            return fail("no corpus paths configured".into());
        }
        self.curation.validate().at(Stage::Config)?;
        self.augmentation.validate().at(Stage::Config)?;
        self.tasks.mix.validate().at(Stage::Config)?;
        self.reward.validate().at(Stage::Config)?;
        self.sandbox.limits.validate().at(Stage::Config)?;
        self.clock()?;
        Ok(())
    }

    pub fn seeds(&self) -> StageSeeds {
        match self.seed {
            Some(master) => StageSeeds {
                curation: derive_seed(master, "curation"),
                augmentation: derive_seed(master, "augmentation"),
                tasks: derive_seed(master, "tasks"),
            },
            None => StageSeeds {
                curation: self.curation.rng_seed,
                augmentation: self.augmentation.rng_seed,
                tasks: self.tasks.rng_seed,
            },
        }
    }

    pub fn clock(&self) -> Result<Box<dyn Clock>, PipelineError> {
        if self.timestamp == "now" {
            return Ok(Box::new(SystemClock));
        }
        FixedClock::parse(&self.timestamp)
            .map(|c| Box::new(c) as Box<dyn Clock>)
            .map_err(|e| StageFailure::Other(format!("timestamp `{}`: {e}", self.timestamp)))
            .at(Stage::Config)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageReport {
    pub input: usize,
    pub output: usize,
    pub rejections: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub ingest: StageReport,
    pub curate: StageReport,
    pub augment: StageReport,
    pub tasks: StageReport,
    pub directions: BTreeMap<String, usize>,
    /// Artifact file names, relative to the output directory.
    pub outputs: BTreeMap<String, String>,
    pub seeds: StageSeeds,
    pub malformed_corpus_lines: usize,
    pub template_hash: String,
}

/// Records that pass the basic filter, plus rejection counts by reason.
pub fn ingest_records(
    records: &[RawRecord],
    config: &FilterConfig,
    executor: &dyn Executor,
    mode: Parallelism,
) -> (Vec<RawRecord>, BTreeMap<String, usize>) {
    let verdicts = par::map(mode, records, |record| {
        let snippet = &record.snippet;
        if snippet.line_count < config.min_lines || snippet.char_count < config.min_chars {
            return FilterReason::TooShort;
        }
        match materialize_input(snippet, &record.primary_input()) {
            Ok(unit) => basic_filter(record, &executor.run(&unit), config).reason,
            Err(_) => FilterReason::Unparseable,
        }
    });
    let mut kept = Vec::new();
    let mut rejections = BTreeMap::new();
    for (record, reason) in records.iter().zip(verdicts) {
        if reason == FilterReason::Ok {
            kept.push(record.clone());
        } else {
            *rejections.entry(format!("{reason:?}")).or_default() += 1;
        }
    }
    (kept, rejections)
}

/// Curates records by snippet; returns survivors in id order and the number
/// of rounds run.
pub fn curate_records(
    records: &[RawRecord],
    config: &CurationConfig,
    mode: Parallelism,
) -> Result<(Vec<RawRecord>, usize), CurationError> {
    if records.is_empty() {
        return Ok((Vec::new(), 0));
    }
    let snippets: Vec<_> = records.iter().map(|r| r.snippet.clone()).collect();
    let (survivors, rounds) = curate_counted(&snippets, config, mode)?;
    let keep: HashSet<&str> = survivors.iter().map(|s| s.id.as_str()).collect();
    let mut out: Vec<RawRecord> = records
        .iter()
        .filter(|r| keep.contains(r.snippet.id.as_str()))
        .cloned()
        .collect();
    out.sort_by(|a, b| a.snippet.id.cmp(&b.snippet.id));
    Ok((out, rounds))
}

#[derive(Debug, Default)]
pub struct AugmentReport {
    pub samples: Vec<TrainingSample>,
    pub rejections: Vec<Rejection>,
    /// Records after splitting multi-input rows.
    pub expanded: usize,
}

impl AugmentReport {
    pub fn histogram(&self) -> BTreeMap<String, usize> {
        let mut h = BTreeMap::new();
        for r in &self.rejections {
            *h.entry(format!("{:?}", r.reason)).or_default() += 1;
        }
        h
    }
}

/// Splits multi-input records and prepares one training sample per input.
/// Output order follows input order.
pub fn augment_records(
    records: &[RawRecord],
    policy: &AugmentationPolicy,
    executor: &dyn Executor,
    clock: &dyn Clock,
    mode: Parallelism,
) -> Result<AugmentReport, AugmentError> {
    policy.validate()?;
    let expanded: Vec<RawRecord> = records.iter().flat_map(RawRecord::expand_inputs).collect();
    let results = par::map(mode, &expanded, |r| {
        prepare_training_sample(r, policy, executor, clock)
    });
    let mut report = AugmentReport {
        expanded: expanded.len(),
        ..AugmentReport::default()
    };
    for result in results {
        match result? {
            Preparation::Accepted(s) => report.samples.push(*s),
            Preparation::Rejected(r) => report.rejections.push(r),
        }
    }
    Ok(report)
}

pub fn generate_tasks(
    samples: &[TrainingSample],
    mix: &TaskMix,
    rng_seed: u64,
    mode: Parallelism,
) -> Result<Vec<TaskInstance>, TaskError> {
    mix.validate()?;
    par::map(mode, samples, |s| generate_task(s, mix, rng_seed))
        .into_iter()
        .collect()
}

/// One line of a batch scoring result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BatchScore {
    Scored(ScoreResponse),
    Failed { task_id: String, error: ErrorBody },
}

/// Machine-readable error shared by the CLI and the service.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

pub fn score_requests(
    tasks: &HashMap<String, TaskInstance>,
    requests: &[ScoreRequest],
    config: &RewardConfig,
    executor: &dyn Executor,
    mode: Parallelism,
) -> Vec<BatchScore> {
    par::map(mode, requests, |req| {
        let failed = |code: &str, message: String| BatchScore::Failed {
            task_id: req.task_id.clone(),
            error: ErrorBody {
                code: code.into(),
                message,
            },
        };
        let Some(task) = tasks.get(&req.task_id) else {
            return failed("not_found", format!("unknown task `{}`", req.task_id));
        };
        match score_task(&req.response_text, task, config, executor) {
            Ok(breakdown) => BatchScore::Scored(ScoreResponse {
                task_id: req.task_id.clone(),
                group_id: req.group_id.clone(),
                breakdown,
            }),
            Err(e) => failed("scoring_failed", e.to_string()),
        }
    })
}

/// Loads a task file into a map keyed by task id.
pub fn load_tasks(path: &Path) -> Result<HashMap<String, TaskInstance>, StageFailure> {
    let tasks: Vec<TaskInstance> = jsonl::read(path)?;
    let mut map = HashMap::with_capacity(tasks.len());
    for t in tasks {
        let id = t.task_id.clone();
        if map.insert(id.clone(), t).is_some() {
            return Err(StageFailure::Other(format!("duplicate task id `{id}`")));
        }
    }
    Ok(map)
}

fn load_all(paths: &[PathBuf]) -> Result<(Vec<RawRecord>, usize), StageFailure> {
    let mut records = Vec::new();
    let mut skipped = 0;
    let mut seen = HashSet::new();
    for path in paths {
        let loaded = load_corpus(path)?;
        skipped += loaded.skipped;
        for r in loaded.records {
            if !seen.insert(r.snippet.id.clone()) {
                return Err(CurationError::DuplicateId(r.snippet.id).into());
            }
            records.push(r);
        }
    }
    Ok((records, skipped))
}

/// Runs every stage with a fresh sandbox built from the config.
pub fn run_pipeline(config: &PipelineConfig) -> Result<Manifest, PipelineError> {
    config.validate()?;
    let sandbox = Sandbox::new(config.sandbox.clone()).at(Stage::Config)?;
    run_pipeline_with(config, &sandbox)
}

pub fn run_pipeline_with(
    config: &PipelineConfig,
    executor: &dyn Executor,
) -> Result<Manifest, PipelineError> {
    config.validate()?;
    let seeds = config.seeds();
    let clock = config.clock()?;
    let mode = config.parallelism;
    let out = &config.output_dir;
    let path = |name: &str| out.join(name);

    let (records, malformed) = load_all(&config.corpus).at(Stage::Ingest)?;
    let (ingested, ingest_rejections) = ingest_records(&records, &config.filter, executor, mode);
    jsonl::write(&path(INGESTED_FILE), &ingested).at(Stage::Ingest)?;
    log::info!("ingest: {} -> {}", records.len(), ingested.len());

    let curation = CurationConfig {
        rng_seed: seeds.curation,
        ..config.curation.clone()
    };
    let (curated, _) = curate_records(&ingested, &curation, mode).at(Stage::Curate)?;
    jsonl::write(&path(CURATED_FILE), &curated).at(Stage::Curate)?;
    log::info!("curate: {} -> {}", ingested.len(), curated.len());

    let policy = AugmentationPolicy {
        rng_seed: seeds.augmentation,
        ..config.augmentation.clone()
    };
    let report =
        augment_records(&curated, &policy, executor, clock.as_ref(), mode).at(Stage::Augment)?;
    jsonl::write(&path(SAMPLES_FILE), &report.samples).at(Stage::Augment)?;
    jsonl::write(&path(REJECTIONS_FILE), &report.rejections).at(Stage::Augment)?;
    log::info!("augment: {} -> {}", report.expanded, report.samples.len());

    let tasks =
        generate_tasks(&report.samples, &config.tasks.mix, seeds.tasks, mode).at(Stage::Tasks)?;
    jsonl::write(&path(TASKS_FILE), &tasks).at(Stage::Tasks)?;

    let mut directions = BTreeMap::new();
    for d in [Direction::Forward, Direction::Backward] {
        directions.insert(
            d.to_string(),
            tasks.iter().filter(|t| t.direction == d).count(),
        );
    }
    let outputs = [
        ("ingested", INGESTED_FILE),
        ("curated", CURATED_FILE),
        ("samples", SAMPLES_FILE),
        ("rejections", REJECTIONS_FILE),
        ("tasks", TASKS_FILE),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect();
    let manifest = Manifest {
        ingest: StageReport {
            input: records.len(),
            output: ingested.len(),
            rejections: ingest_rejections,
        },
        curate: StageReport {
            input: ingested.len(),
            output: curated.len(),
            rejections: [("NotInClique".to_string(), ingested.len() - curated.len())]
                .into_iter()
                .filter(|(_, n)| *n > 0)
                .collect(),
        },
        augment: StageReport {
            input: report.expanded,
            output: report.samples.len(),
            rejections: report.histogram(),
        },
        tasks: StageReport {
            input: report.samples.len(),
            output: tasks.len(),
            rejections: BTreeMap::new(),
        },
        directions,
        outputs,
        seeds,
        malformed_corpus_lines: malformed,
        template_hash: template_hash().to_string(),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::create_dir_all(out)
        .and_then(|_| std::fs::write(path(MANIFEST_FILE), text + "\n"))
        .map_err(|e| StageFailure::Other(e.to_string()))
        .at(Stage::Manifest)?;
    Ok(manifest)
}
