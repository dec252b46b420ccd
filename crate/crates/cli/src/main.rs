use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use codeforge_core::augment::AugmentationPolicy;
use codeforge_core::corpus::{load_corpus, RawRecord};
use codeforge_core::jsonl;
use codeforge_core::par::Parallelism;
use codeforge_core::pipeline::{
    augment_records, curate_records, generate_tasks, ingest_records, load_tasks, run_pipeline,
    score_requests, PipelineConfig,
};
use codeforge_core::reward::{RewardConfig, ScoreRequest};
use codeforge_core::sandbox::Sandbox;
use codeforge_core::taskgen::TaskMix;
use codeforge_server::{AppState, ServerConfig};

#[derive(Parser)]
#[command(
    name = "codeforge",
    version,
    about = "Build and score execution-grounded code tasks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline config supplying defaults for unspecified options.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run on the calling thread only.
    #[arg(long)]
    sequential: bool,
}

impl Common {
    fn load(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if self.sequential {
            cfg.parallelism = Parallelism::Sequential;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Filter raw corpus rows by length, imports and a probe run.
    Ingest {
        #[command(flatten)]
        common: Common,
        #[arg(long, required = true, num_args = 1..)]
        corpus: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Keep a maximal set of mutually distinct snippets.
    Curate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        subset_cap: Option<usize>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Mutate, execute and label curated records.
    Augment {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Where rejected records go; defaults to `rejections.jsonl` next to `--out`.
        #[arg(long)]
        rejections: Option<PathBuf>,
        /// Comma-separated error classes to keep besides clean runs, e.g. `syntax,logical`.
        #[arg(long)]
        errors: Option<String>,
        #[arg(long)]
        digit_prob: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Turn training samples into forward and backward tasks.
    Tasks {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Direction weights, e.g. `forward=0.5,backward=0.5`.
        #[arg(long)]
        mix: Option<TaskMix>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a batch of responses against a task file.
    Score {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        responses: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        w: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Run every stage from a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Serve scoring over HTTP.
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        /// Backward requests allowed in flight before answering 429.
        #[arg(long)]
        max_pending: Option<usize>,
        #[arg(long)]
        w: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
    },
}

fn reward_config(base: RewardConfig, w: Option<f64>, beta: Option<f64>) -> Result<RewardConfig> {
    let cfg = RewardConfig {
        w: w.unwrap_or(base.w),
        beta: beta.unwrap_or(base.beta),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn read_records(path: &Path) -> Result<Vec<RawRecord>> {
    jsonl::read(path).with_context(|| format!("reading {}", path.display()))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Ingest {
            common,
            corpus,
            out,
        } => {
            let cfg = common.load()?;
            let sandbox = Sandbox::new(cfg.sandbox.clone())?;
            let mut records = Vec::new();
            let mut malformed = 0;
            for path in &corpus {
                let loaded = load_corpus(path)?;
                malformed += loaded.skipped;
                records.extend(loaded.records);
            }
            let (kept, rejections) =
                ingest_records(&records, &cfg.filter, &sandbox, cfg.parallelism);
            jsonl::write(&out, &kept)?;
            print_json(&serde_json::json!({
                "input_n": records.len(),
                "output_n": kept.len(),
                "malformed": malformed,
                "rejections": rejections,
            }))
        }
        Command::Curate {
            common,
            input,
            out,
            gamma,
            subset_cap,
            iterations,
            seed,
        } => {
            let cfg = common.load()?;
            let mut curation = cfg.curation.clone();
            curation.rng_seed = cfg.seeds().curation;
            if let Some(g) = gamma {
                curation.gamma = g;
            }
            if let Some(c) = subset_cap {
                curation.subset_cap = c;
            }
            if let Some(i) = iterations {
                curation.iterations = i;
            }
            if let Some(s) = seed {
                curation.rng_seed = s;
            }
            let records = read_records(&input)?;
            let (kept, rounds) = curate_records(&records, &curation, cfg.parallelism)?;
            jsonl::write(&out, &kept)?;
            print_json(&serde_json::json!({
                "input_n": records.len(),
                "output_n": kept.len(),
                "iterations": rounds,
                "seed": curation.rng_seed,
            }))
        }
        Command::Augment {
            common,
            input,
            out,
            rejections,
            errors,
            digit_prob,
            seed,
        } => {
            let cfg = common.load()?;
            let mut policy = AugmentationPolicy {
                rng_seed: cfg.seeds().augmentation,
                ..cfg.augmentation.clone()
            };
            if let Some(list) = errors {
                policy.allowed_error_classes = AugmentationPolicy::parse_error_classes(&list)?;
            }
            if let Some(p) = digit_prob {
                policy.digit_prob = p;
            }
            if let Some(s) = seed {
                policy.rng_seed = s;
            }
            policy.validate()?;
            let sandbox = Sandbox::new(cfg.sandbox.clone())?;
            let clock = cfg.clock()?;
            let records = read_records(&input)?;
            let report =
                augment_records(&records, &policy, &sandbox, clock.as_ref(), cfg.parallelism)?;
            let rejections_path = rejections
                .unwrap_or_else(|| out.with_file_name(codeforge_core::pipeline::REJECTIONS_FILE));
            jsonl::write(&out, &report.samples)?;
            jsonl::write(&rejections_path, &report.rejections)?;
            print_json(&serde_json::json!({
                "input_n": report.expanded,
                "output_n": report.samples.len(),
                "rejections": report.histogram(),
                "seed": policy.rng_seed,
            }))
        }
        Command::Tasks {
            common,
            input,
            out,
            mix,
            seed,
        } => {
            let cfg = common.load()?;
            let mix = mix.unwrap_or(cfg.tasks.mix);
            let seed = seed.unwrap_or(cfg.seeds().tasks);
            let samples =
                jsonl::read(&input).with_context(|| format!("reading {}", input.display()))?;
            let tasks = generate_tasks(&samples, &mix, seed, cfg.parallelism)?;
            jsonl::write(&out, &tasks)?;
            let backward = tasks
                .iter()
                .filter(|t| t.direction == codeforge_core::taskgen::Direction::Backward)
                .count();
            print_json(&serde_json::json!({
                "input_n": samples.len(),
                "output_n": tasks.len(),
                "forward": tasks.len() - backward,
                "backward": backward,
                "seed": seed,
            }))
        }
        Command::Score {
            common,
            tasks,
            responses,
            out,
            w,
            beta,
        } => {
            let cfg = common.load()?;
            let reward = reward_config(cfg.reward, w, beta)?;
            let tasks = load_tasks(&tasks)?;
            let requests: Vec<ScoreRequest> = jsonl::read(&responses)
                .with_context(|| format!("reading {}", responses.display()))?;
            let sandbox = Sandbox::new(cfg.sandbox.clone())?;
            let scores = score_requests(&tasks, &requests, &reward, &sandbox, cfg.parallelism);
            match out {
                Some(path) => {
                    jsonl::write(&path, &scores)?;
                }
                None => {
                    let mut stdout = std::io::stdout().lock();
                    for s in &scores {
                        serde_json::to_writer(&mut stdout, s)?;
                        writeln!(stdout)?;
                    }
                }
            }
            Ok(())
        }
        Command::Run { config } => {
            let cfg = PipelineConfig::load(&config)?;
            let manifest = run_pipeline(&cfg)?;
            print_json(&serde_json::to_value(&manifest)?)
        }
        Command::Serve {
            common,
            tasks,
            bind,
            max_pending,
            w,
            beta,
        } => {
            let cfg = common.load()?;
            let reward = reward_config(cfg.reward, w, beta)?;
            let tasks = load_tasks(&tasks)?;
            if tasks.is_empty() {
                bail!("task file is empty");
            }
            let sandbox = Sandbox::new(cfg.sandbox.clone())?;
            let mut server = ServerConfig::for_slots(sandbox.slot_count(), reward);
            if let Some(n) = max_pending {
                server.max_pending = n;
            }
            let state = AppState::new(tasks, Arc::new(sandbox), server);
            tokio::runtime::Runtime::new()?.block_on(codeforge_server::serve(bind, state))?;
            Ok(())
        }
    }
}
