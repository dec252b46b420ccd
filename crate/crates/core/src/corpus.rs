//! Corpus records: loading, basic filtering, and turning inputs into
//! executable units.

use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pylang;
use crate::sandbox::{ExecutionOutcome, ExecutionStatus};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("corpus {path} contains no parseable records ({skipped} malformed lines)")]
    Empty { path: String, skipped: usize },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MaterializeError {
    #[error("function input `{call}` is not a valid expression: {message}")]
    InvalidCall { call: String, message: String },
}

/// One source unit of the corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeSnippet {
    pub id: String,
    pub source_text: String,
    pub line_count: usize,
    pub char_count: usize,
    pub origin: String,
}

impl CodeSnippet {
    pub fn new(
        id: impl Into<String>,
        source_text: impl Into<String>,
        origin: impl Into<String>,
    ) -> Self {
        let source_text = source_text.into();
        CodeSnippet {
            id: id.into(),
            line_count: source_text.lines().count(),
            char_count: source_text.chars().count(),
            source_text,
            origin: origin.into(),
        }
    }

    /// Same snippet with new text; counts are recomputed.
    pub fn with_source(&self, id: impl Into<String>, source_text: impl Into<String>) -> Self {
        CodeSnippet::new(id, source_text, self.origin.clone())
    }
}

/// How a snippet receives its input.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum InputSpec {
    #[default]
    NoInput,
    /// Text piped to standard input.
    Stdin(String),
    /// A call expression appended to the snippet, e.g. `f(2, 5)`.
    FunctionInput(String),
}

impl InputSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            InputSpec::NoInput => "none",
            InputSpec::Stdin(_) => "stdin",
            InputSpec::FunctionInput(_) => "function",
        }
    }

    pub fn value(&self) -> &str {
        match self {
            InputSpec::NoInput => "",
            InputSpec::Stdin(v) | InputSpec::FunctionInput(v) => v,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct InputRow {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<String>,
}

impl Serialize for InputSpec {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        InputRow {
            kind: self.kind_name().to_string(),
            value: match self {
                InputSpec::NoInput => None,
                other => Some(other.value().to_string()),
            },
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for InputSpec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let row = InputRow::deserialize(deserializer)?;
        match (row.kind.as_str(), row.value) {
            ("none", None) => Ok(InputSpec::NoInput),
            ("none", Some(v)) if v.is_empty() => Ok(InputSpec::NoInput),
            ("stdin", Some(v)) => Ok(InputSpec::Stdin(v)),
            ("function", Some(v)) => Ok(InputSpec::FunctionInput(v)),
            (kind, value) => Err(serde::de::Error::custom(format!(
                "invalid input spec kind `{kind}` with value {value:?}"
            ))),
        }
    }
}

/// One corpus row: a snippet plus its inputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRecord {
    pub snippet: CodeSnippet,
    pub inputs: Vec<InputSpec>,
}

#[derive(Serialize, Deserialize)]
struct CorpusRow {
    id: String,
    source: String,
    #[serde(default)]
    inputs: Vec<InputSpec>,
    #[serde(default)]
    origin: String,
}

impl Serialize for RawRecord {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        CorpusRow {
            id: self.snippet.id.clone(),
            source: self.snippet.source_text.clone(),
            inputs: self.inputs.clone(),
            origin: self.snippet.origin.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for RawRecord {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let row = CorpusRow::deserialize(deserializer)?;
        Ok(RawRecord {
            snippet: CodeSnippet::new(row.id, row.source, row.origin),
            inputs: row.inputs,
        })
    }
}

impl RawRecord {
    pub fn new(snippet: CodeSnippet, inputs: Vec<InputSpec>) -> Self {
        RawRecord { snippet, inputs }
    }

    /// The input used for probing and ground truth; an empty list means no input.
    pub fn primary_input(&self) -> InputSpec {
        self.inputs.first().cloned().unwrap_or_default()
    }

    /// One single-input record per input, with ids suffixed `#<index>`.
    /// Records with at most one input are returned unchanged.
    pub fn expand_inputs(&self) -> Vec<RawRecord> {
        if self.inputs.len() <= 1 {
            return vec![self.clone()];
        }
        self.inputs
            .iter()
            .enumerate()
            .map(|(i, input)| RawRecord {
                snippet: CodeSnippet {
                    id: format!("{}#{i}", self.snippet.id),
                    ..self.snippet.clone()
                },
                inputs: vec![input.clone()],
            })
            .collect()
    }
}

/// Line-by-line reader over a JSON Lines corpus. Malformed lines are skipped
/// and counted.
pub struct CorpusReader<R> {
    lines: io::Lines<R>,
    skipped: usize,
    line_no: usize,
}

impl CorpusReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self, CorpusError> {
        let file = File::open(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(CorpusReader::new(BufReader::new(file)))
    }
}

impl<R: BufRead> CorpusReader<R> {
    pub fn new(reader: R) -> Self {
        CorpusReader {
            lines: reader.lines(),
            skipped: 0,
            line_no: 0,
        }
    }

    pub fn skipped(&self) -> usize {
        self.skipped
    }
}

impl<R: BufRead> Iterator for CorpusReader<R> {
    type Item = io::Result<RawRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(e) => return Some(Err(e)),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<RawRecord>(&line) {
                Ok(record) => return Some(Ok(record)),
                Err(e) => {
                    log::warn!("skipping malformed corpus line {}: {e}", self.line_no);
                    self.skipped += 1;
                }
            }
        }
    }
}

#[derive(Debug)]
pub struct LoadedCorpus {
    pub records: Vec<RawRecord>,
    pub skipped: usize,
}

/// Reads a whole JSON Lines corpus.
pub fn load_corpus(path: &Path) -> Result<LoadedCorpus, CorpusError> {
    let mut reader = CorpusReader::open(path)?;
    let mut records = Vec::new();
    for item in &mut reader {
        records.push(item.map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?);
    }
    if records.is_empty() {
        return Err(CorpusError::Empty {
            path: path.display().to_string(),
            skipped: reader.skipped(),
        });
    }
    Ok(LoadedCorpus {
        records,
        skipped: reader.skipped(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub min_lines: usize,
    pub min_chars: usize,
    /// Top-level packages whose import marks a snippet as visualization code.
    pub visualization_modules: Vec<String>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_lines: 10,
            min_chars: 30,
            visualization_modules: pylang::DEFAULT_VISUALIZATION_MODULES
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FilterReason {
    Ok,
    ExecutionFailed,
    TooShort,
    VisualizationRelated,
    Unparseable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub keep: bool,
    pub reason: FilterReason,
}

impl From<FilterReason> for FilterVerdict {
    fn from(reason: FilterReason) -> Self {
        FilterVerdict {
            keep: reason == FilterReason::Ok,
            reason,
        }
    }
}

/// Decides whether a record enters the training pool. `probe` is the outcome
/// of running the record's primary input.
pub fn basic_filter(
    record: &RawRecord,
    probe: &ExecutionOutcome,
    config: &FilterConfig,
) -> FilterVerdict {
    let snippet = &record.snippet;
    let reason = if snippet.line_count < config.min_lines || snippet.char_count < config.min_chars {
        FilterReason::TooShort
    } else if probe.status != ExecutionStatus::Clean {
        FilterReason::ExecutionFailed
    } else if is_visualization_related(&snippet.source_text, &config.visualization_modules) {
        FilterReason::VisualizationRelated
    } else if pylang::check_module(&snippet.source_text).is_err() {
        FilterReason::Unparseable
    } else {
        FilterReason::Ok
    };
    reason.into()
}

pub fn is_visualization_related(source: &str, deny_list: &[String]) -> bool {
    pylang::imported_packages(source)
        .iter()
        .any(|pkg| deny_list.iter().any(|d| d == pkg))
}

/// Source and stdin ready to hand to the sandbox.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutableUnit {
    pub source_text: String,
    pub stdin_text: String,
}

/// Builds the executable unit for `snippet` under `input`. Function inputs
/// are appended as a trailing `print(<call>)` statement so the result lands
/// on stdout; existing lines are never touched.
pub fn materialize_input(
    snippet: &CodeSnippet,
    input: &InputSpec,
) -> Result<ExecutableUnit, MaterializeError> {
    materialize_source(&snippet.source_text, input)
}

pub(crate) fn materialize_source(
    source: &str,
    input: &InputSpec,
) -> Result<ExecutableUnit, MaterializeError> {
    match input {
        InputSpec::NoInput => Ok(ExecutableUnit {
            source_text: source.to_string(),
            stdin_text: String::new(),
        }),
        InputSpec::Stdin(text) => Ok(ExecutableUnit {
            source_text: source.to_string(),
            stdin_text: text.clone(),
        }),
        InputSpec::FunctionInput(call) => {
            let call = call.trim();
            if call.contains(['\n', '\r']) {
                return Err(MaterializeError::InvalidCall {
                    call: call.to_string(),
                    message: "call expression must fit on one line".into(),
                });
            }
            pylang::check_expression(call).map_err(|e| MaterializeError::InvalidCall {
                call: call.to_string(),
                message: e.message,
            })?;
            let mut out = String::with_capacity(source.len() + call.len() + 10);
            out.push_str(source);
            if !source.is_empty() && !source.ends_with('\n') {
                out.push('\n');
            }
            out.push_str("print(");
            out.push_str(call);
            out.push_str(")\n");
            Ok(ExecutableUnit {
                source_text: out,
                stdin_text: String::new(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;
    use std::time::Duration;

    fn outcome(status: ExecutionStatus) -> ExecutionOutcome {
        ExecutionOutcome {
            stdout_text: String::new(),
            stderr_text: String::new(),
            status,
            wall_time: Duration::from_millis(10),
            exit_code: if status == ExecutionStatus::Clean {
                Some(0)
            } else {
                None
            },
        }
    }

    fn lines_of(n: usize, width: usize) -> String {
        (0..n)
            .map(|i| format!("v{i} = {}\n", "1".repeat(width)))
            .collect()
    }

    #[test]
    fn snippet_counts() {
        let s = CodeSnippet::new("a", "x = 1\ny = 2\n", "t");
        assert_eq!((s.line_count, s.char_count), (2, 12));
        let s = CodeSnippet::new("b", "é\nb", "t");
        assert_eq!((s.line_count, s.char_count), (2, 3));
    }

    #[test]
    fn reader_skips_malformed() {
        let data = r#"{"id":"a","source":"print(1)","inputs":[],"origin":"t"}
{"id":"b","source":"print(2)","inputs":[{"kind":"stdin","value":"3 4\n"}],"origin":"t"}
not json
{"id":"c","source":"def f(x): return x","inputs":[{"kind":"function","value":"f(1)"},{"kind":"none"}],"origin":"t"}
"#;
        let mut reader = CorpusReader::new(Cursor::new(data));
        let records: Vec<_> = (&mut reader).map(Result::unwrap).collect();
        assert_eq!(records.len(), 3);
        assert_eq!(reader.skipped(), 1);
        assert_eq!(records[1].inputs, vec![InputSpec::Stdin("3 4\n".into())]);
        assert_eq!(
            records[2].inputs,
            vec![InputSpec::FunctionInput("f(1)".into()), InputSpec::NoInput]
        );
    }

    #[test]
    fn bad_input_kind_is_malformed() {
        let data = r#"{"id":"a","source":"x","inputs":[{"kind":"stdin"}]}
{"id":"b","source":"x","inputs":[{"kind":"weird","value":"1"}]}
"#;
        let mut reader = CorpusReader::new(Cursor::new(data));
        assert_eq!((&mut reader).count(), 0);
        assert_eq!(reader.skipped(), 2);
    }

    #[test]
    fn record_round_trips_through_json() {
        let r = RawRecord::new(
            CodeSnippet::new("id1", "print(1)\n", "origin"),
            vec![InputSpec::NoInput, InputSpec::Stdin("x".into())],
        );
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(
            json,
            r#"{"id":"id1","source":"print(1)\n","inputs":[{"kind":"none"},{"kind":"stdin","value":"x"}],"origin":"origin"}"#
        );
        assert_eq!(serde_json::from_str::<RawRecord>(&json).unwrap(), r);
    }

    #[test]
    fn expand_inputs_splits_records() {
        let r = RawRecord::new(
            CodeSnippet::new("r", "x", "t"),
            vec![InputSpec::Stdin("1".into()), InputSpec::Stdin("2".into())],
        );
        let ex = r.expand_inputs();
        assert_eq!(ex.len(), 2);
        assert_eq!(ex[1].snippet.id, "r#1");
        assert_eq!(ex[1].inputs, vec![InputSpec::Stdin("2".into())]);
        let single = RawRecord::new(CodeSnippet::new("s", "x", "t"), vec![]);
        assert_eq!(single.expand_inputs(), vec![single.clone()]);
        assert_eq!(single.primary_input(), InputSpec::NoInput);
    }

    #[test]
    fn filter_too_short() {
        let cfg = FilterConfig::default();
        let nine = RawRecord::new(CodeSnippet::new("a", lines_of(9, 50), "t"), vec![]);
        assert!(nine.snippet.char_count >= 500);
        let v = basic_filter(&nine, &outcome(ExecutionStatus::Clean), &cfg);
        assert_eq!(
            v,
            FilterVerdict {
                keep: false,
                reason: FilterReason::TooShort
            }
        );
        let tiny = RawRecord::new(CodeSnippet::new("b", "\n".repeat(12), "t"), vec![]);
        assert_eq!(
            basic_filter(&tiny, &outcome(ExecutionStatus::Clean), &cfg).reason,
            FilterReason::TooShort
        );
    }

    #[test]
    fn filter_execution_and_visualization() {
        let cfg = FilterConfig::default();
        let ok = RawRecord::new(CodeSnippet::new("a", lines_of(12, 3), "t"), vec![]);
        assert_eq!(
            basic_filter(&ok, &outcome(ExecutionStatus::Timeout), &cfg).reason,
            FilterReason::ExecutionFailed
        );
        let v = basic_filter(&ok, &outcome(ExecutionStatus::Clean), &cfg);
        assert!(v.keep);
        assert_eq!(v.reason, FilterReason::Ok);

        let viz_src = format!("import matplotlib.pyplot as plt\n{}", lines_of(11, 3));
        let viz = RawRecord::new(CodeSnippet::new("v", viz_src, "t"), vec![]);
        assert_eq!(
            basic_filter(&viz, &outcome(ExecutionStatus::Clean), &cfg).reason,
            FilterReason::VisualizationRelated
        );
        let custom = FilterConfig {
            visualization_modules: vec![],
            ..FilterConfig::default()
        };
        assert!(basic_filter(&viz, &outcome(ExecutionStatus::Clean), &custom).keep);
    }

    #[test]
    fn filter_unparseable() {
        let src = format!("{}def broken(:\n", lines_of(12, 3));
        let r = RawRecord::new(CodeSnippet::new("u", src, "t"), vec![]);
        assert_eq!(
            basic_filter(
                &r,
                &outcome(ExecutionStatus::Clean),
                &FilterConfig::default()
            )
            .reason,
            FilterReason::Unparseable
        );
    }

    #[test]
    fn materialize_cases() {
        let p = CodeSnippet::new("p", "def f(a, b):\n    return a * b\n", "t");
        let unit = materialize_input(&p, &InputSpec::NoInput).unwrap();
        assert_eq!(
            (unit.source_text.as_str(), unit.stdin_text.as_str()),
            (p.source_text.as_str(), "")
        );
        let unit = materialize_input(&p, &InputSpec::Stdin("3 4\n".into())).unwrap();
        assert_eq!(unit.stdin_text, "3 4\n");
        let unit = materialize_input(&p, &InputSpec::FunctionInput("f(2, 5)".into())).unwrap();
        assert_eq!(
            unit.source_text,
            format!("{}print(f(2, 5))\n", p.source_text)
        );
        assert!(unit.source_text.starts_with(&p.source_text));

        let no_nl = CodeSnippet::new("q", "def f(a):\n    return a", "t");
        let unit = materialize_input(&no_nl, &InputSpec::FunctionInput("f(1)".into())).unwrap();
        assert_eq!(unit.source_text, "def f(a):\n    return a\nprint(f(1))\n");

        assert!(matches!(
            materialize_input(&p, &InputSpec::FunctionInput("f(2,".into())),
            Err(MaterializeError::InvalidCall { .. })
        ));
        assert!(
            materialize_input(&p, &InputSpec::FunctionInput("f(1)\nimport os".into())).is_err()
        );
    }
}
