use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use codeforge_core::augment::{AugmentedSample, ErrorClass, TrainingSample};
use codeforge_core::corpus::{CodeSnippet, ExecutableUnit, InputSpec};
use codeforge_core::reward::{
    combine, score_backward, score_forward, score_task, stderr_reward, RewardBreakdown,
    RewardConfig, ScoreError,
};
use codeforge_core::sandbox::{
    Clock, EnvironmentInfo, ExecutionOutcome, ExecutionStatus, Executor, ResourceLimits, Sandbox,
    SandboxConfig, SandboxError,
};
use codeforge_core::taskgen::{
    build_backward_task, build_forward_task, mask_source, unmask, TaskInstance,
};
use proptest::prelude::*;

/// Executor double that records how often it runs and replays a fixed outcome.
struct Counting {
    runs: AtomicUsize,
    outcome: ExecutionOutcome,
    limits: ResourceLimits,
}

impl Counting {
    fn new(stdout: &str, stderr: &str, status: ExecutionStatus) -> Self {
        Counting {
            runs: AtomicUsize::new(0),
            outcome: ExecutionOutcome {
                stdout_text: stdout.into(),
                stderr_text: stderr.into(),
                status,
                wall_time: Duration::ZERO,
                exit_code: None,
            },
            limits: ResourceLimits::default(),
        }
    }
}

impl Executor for Counting {
    fn run(&self, _unit: &ExecutableUnit) -> ExecutionOutcome {
        self.runs.fetch_add(1, Ordering::SeqCst);
        self.outcome.clone()
    }

    fn run_with_env(
        &self,
        unit: &ExecutableUnit,
        _clock: &dyn Clock,
    ) -> Result<(ExecutionOutcome, EnvironmentInfo), SandboxError> {
        Ok((self.run(unit), env()))
    }

    fn limits(&self) -> &ResourceLimits {
        &self.limits
    }
}

fn env() -> EnvironmentInfo {
    EnvironmentInfo {
        project_tree: "project/\nproject/main.py".into(),
        snippet_path: "project/main.py".into(),
        run_command: "cd project && python3 main.py".into(),
        timestamp: "2025-01-01T00:00:00Z".into(),
    }
}

fn sample(source: &str, input: InputSpec, outcome: ExecutionOutcome) -> TrainingSample {
    TrainingSample {
        sample: AugmentedSample {
            snippet: CodeSnippet::new("x/aug", source, "t"),
            inputs: vec![input.clone()],
            edit_log: vec![],
            parent_id: "x".into(),
        },
        unit: ExecutableUnit {
            source_text: source.into(),
            stdin_text: match &input {
                InputSpec::Stdin(s) => s.clone(),
                _ => String::new(),
            },
        },
        error_class: ErrorClass::None,
        outcome,
        environment: env(),
    }
}

fn clean(stdout: &str) -> ExecutionOutcome {
    ExecutionOutcome {
        stdout_text: stdout.into(),
        stderr_text: String::new(),
        status: ExecutionStatus::Clean,
        wall_time: Duration::ZERO,
        exit_code: Some(0),
    }
}

fn forward_response(out: &str, err: &str) -> String {
    format!("```answer_stdout\n{out}\n```\n```answer_stderr\n{err}\n```\n")
}

fn fills_from(task: &TaskInstance) -> String {
    task.mask_map
        .iter()
        .map(|m| {
            format!(
                "```answer_MASKED_LINE_{}\n{}\n```\n",
                m.mask_id, m.original_line
            )
        })
        .collect()
}

const PROGRAM: &str = "def area(w, h):\n    return w * h\n\nsizes = [(2, 3), (4, 5), (1, 1)]\ntotal = 0\nfor w, h in sizes:\n    a = area(w, h)\n    total += a\n    print(w, h, a)\nprint('total', total)\n";

#[test]
fn forward_scoring_never_runs() {
    let task = build_forward_task(&sample(PROGRAM, InputSpec::NoInput, clean("x\n"))).unwrap();
    let exec = Counting::new("", "", ExecutionStatus::Clean);
    let config = RewardConfig::default();
    let b = score_task(&forward_response("x", ""), &task, &config, &exec).unwrap();
    assert!((b.r - 0.775).abs() < 1e-12);
    assert_eq!(
        score_task("garbage", &task, &config, &exec).unwrap(),
        RewardBreakdown::ZERO
    );
    assert_eq!(exec.runs.load(Ordering::SeqCst), 0);
}

#[test]
fn backward_scoring_runs_exactly_once() {
    let task =
        build_backward_task(&sample(PROGRAM, InputSpec::NoInput, clean("x\n")), 2, 5).unwrap();
    let exec = Counting::new("x\n", "", ExecutionStatus::Clean);
    let b = score_backward(&fills_from(&task), &task, &RewardConfig::default(), &exec).unwrap();
    assert_eq!(exec.runs.load(Ordering::SeqCst), 1);
    assert!((b.r - 0.775).abs() < 1e-12);
    // format failure short-circuits before execution
    let only_one = format!(
        "```answer_MASKED_LINE_0\n{}\n```\n",
        task.mask_map[0].original_line
    );
    assert_eq!(
        score_backward(&only_one, &task, &RewardConfig::default(), &exec).unwrap(),
        RewardBreakdown::ZERO
    );
    assert_eq!(exec.runs.load(Ordering::SeqCst), 1);
}

#[test]
fn backward_resource_excess_zeroes_stdout() {
    let task =
        build_backward_task(&sample(PROGRAM, InputSpec::NoInput, clean("x\n")), 1, 5).unwrap();
    let exec = Counting::new("x\n", "", ExecutionStatus::Timeout);
    let b = score_backward(&fills_from(&task), &task, &RewardConfig::default(), &exec).unwrap();
    assert_eq!((b.r_format, b.r_o, b.r_e), (1, 0, 1.0));
}

#[test]
fn backward_spawn_failure_is_an_error() {
    let task =
        build_backward_task(&sample(PROGRAM, InputSpec::NoInput, clean("x\n")), 1, 5).unwrap();
    let exec = Counting::new("", "boom", ExecutionStatus::SpawnFailed);
    assert!(matches!(
        score_backward(&fills_from(&task), &task, &RewardConfig::default(), &exec),
        Err(ScoreError::Sandbox(_))
    ));
}

#[test]
fn direction_mismatch_is_rejected() {
    let task = build_forward_task(&sample(PROGRAM, InputSpec::NoInput, clean(""))).unwrap();
    let exec = Counting::new("", "", ExecutionStatus::Clean);
    assert!(score_backward("", &task, &RewardConfig::default(), &exec).is_err());
}

fn real_sandbox() -> Sandbox {
    Sandbox::new(SandboxConfig {
        limits: ResourceLimits {
            timeout: Duration::from_secs(5),
            ..ResourceLimits::default()
        },
        ..SandboxConfig::default()
    })
    .unwrap()
}

#[test]
fn backward_round_trip_with_interpreter() {
    let sb = real_sandbox();
    let unit = ExecutableUnit {
        source_text: PROGRAM.into(),
        stdin_text: String::new(),
    };
    let gt = sb.run(&unit);
    assert_eq!(gt.status, ExecutionStatus::Clean);
    let config = RewardConfig::default();
    for seed in 0..5 {
        let task =
            build_backward_task(&sample(PROGRAM, InputSpec::NoInput, gt.clone()), 2, seed).unwrap();
        let b = score_backward(&fills_from(&task), &task, &config, &sb).unwrap();
        assert_eq!((b.r_o, b.r_e), (1, 1.0), "seed {seed}");
        assert!((b.r - 0.775).abs() < 1e-12);
    }
}

#[test]
fn syntax_breaking_fill_scores_against_stderr() {
    let sb = real_sandbox();
    let src = "x = 3\ny = 4\nz = x * y\nprint(z)\n";
    let unit = ExecutableUnit {
        source_text: src.into(),
        stdin_text: String::new(),
    };
    let gt = sb.run(&unit);
    let task = build_backward_task(&sample(src, InputSpec::NoInput, gt), 1, 0).unwrap();
    let bad = "```answer_MASKED_LINE_0\nz = (x *\n```\n";
    let b = score_backward(bad, &task, &RewardConfig::default(), &sb).unwrap();
    assert_eq!(b.r_format, 1);
    assert_eq!(b.r_o, 0);
    // clean ground truth has no stderr lines, the broken run has some
    assert_eq!(b.r_e, 0.0);
    assert!((b.r - 0.1).abs() < 1e-12);
}

#[test]
fn stdin_task_rescored_with_its_input() {
    let sb = real_sandbox();
    let src = "a = int(input())\nb = int(input())\nc = a + b\nd = a * b\nprint(c)\nprint(d)\nprint(c - d)\n";
    let input = InputSpec::Stdin("6\n7\n".into());
    let gt = sb.run(&ExecutableUnit {
        source_text: src.into(),
        stdin_text: "6\n7\n".into(),
    });
    assert_eq!(gt.stdout_text, "13\n42\n-29\n");
    let task = build_backward_task(&sample(src, input, gt), 1, 2).unwrap();
    let b = score_backward(&fills_from(&task), &task, &RewardConfig::default(), &sb).unwrap();
    assert_eq!(b.r_o, 1);
}

fn line_set() -> impl Strategy<Value = String> {
    prop::collection::vec("[a-d]{1,2}", 0..6).prop_map(|ls| ls.join("\n"))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn jaccard_properties(a in line_set(), b in line_set()) {
        let j = stderr_reward(&a, &b);
        prop_assert_eq!(j, stderr_reward(&b, &a));
        prop_assert!((0.0..=1.0).contains(&j));
        let sa: std::collections::BTreeSet<&str> = a.lines().collect();
        let sb: std::collections::BTreeSet<&str> = b.lines().collect();
        prop_assert_eq!(j == 1.0, sa == sb);
    }

    #[test]
    fn combined_reward_bounds_and_monotonicity(
        w in 0.0f64..=1.0, beta in 0.0f64..=1.0,
        ro in 0u8..=1, re in 0.0f64..=1.0, bump in 0.0f64..=1.0,
    ) {
        let c = RewardConfig { w, beta };
        let r = combine(1, ro, re, &c);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&r));
        prop_assert!(combine(0, ro, re, &c) <= r);
        prop_assert!(r <= combine(1, 1, re, &c));
        prop_assert!(r <= combine(1, ro, (re + bump).min(1.0), &c) + 1e-15);
    }

    #[test]
    fn default_weights_bracket_valid_responses(out in "[a-z\n]{0,10}", err in "[a-z\n]{0,10}", gt_out in "[a-z\n]{0,10}") {
        let task = build_forward_task(&sample(PROGRAM, InputSpec::NoInput, clean(&gt_out))).unwrap();
        let b = score_forward(&forward_response(&out, &err), &task, &RewardConfig::default()).unwrap();
        if b.r_format == 1 {
            prop_assert!(b.r >= 0.1 - 1e-12 && b.r <= 0.775 + 1e-12);
        } else {
            prop_assert_eq!(b, RewardBreakdown::ZERO);
        }
    }

    #[test]
    fn unmask_reproduces_source(lines in prop::collection::vec("( {0,4})[a-z]{1,6}( = [0-9])?|#[a-z ]{0,4}|", 4..30), seed in any::<u64>(), want in 1usize..=3) {
        let src = lines.join("\n") + "\n";
        let eligible = codeforge_core::taskgen::eligible_lines(&src).len();
        let count = want.min(codeforge_core::taskgen::max_mask_count(eligible));
        prop_assume!(count > 0);
        let m = mask_source(&src, count, seed).unwrap();
        prop_assert_eq!(unmask(&m.masked, &m.mask_map), src);
        let ids: Vec<u32> = m.mask_map.iter().map(|e| e.mask_id).collect();
        prop_assert_eq!(ids, (0..count as u32).collect::<Vec<_>>());
        prop_assert!(m.mask_map.windows(2).all(|w| w[0].line_index < w[1].line_index));
        for id in 0..count {
            let needle = format!("MASKED_LINE_{id}");
            prop_assert_eq!(m.masked.matches(needle.as_str()).count(), 1);
        }
    }
}
