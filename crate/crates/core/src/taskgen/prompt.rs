use std::collections::BTreeMap;
use std::sync::OnceLock;

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::Direction;
use crate::corpus::InputSpec;
use crate::sandbox::EnvironmentInfo;

pub const FORWARD_TEMPLATE: &str = include_str!("../../templates/forward.txt");
pub const BACKWARD_TEMPLATE: &str = include_str!("../../templates/backward.txt");

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RenderError {
    #[error("template variable `{0}` has no value")]
    MissingVariable(String),
    #[error("unterminated `{{{{` in template at byte {0}")]
    Unterminated(usize),
}

/// Hex SHA-256 over both shipped templates.
pub fn template_hash() -> &'static str {
    static HASH: OnceLock<String> = OnceLock::new();
    HASH.get_or_init(|| {
        let mut h = Sha256::new();
        h.update(FORWARD_TEMPLATE.as_bytes());
        h.update([0u8]);
        h.update(BACKWARD_TEMPLATE.as_bytes());
        hex::encode(h.finalize())
    })
}

/// Substitutes `{{name}}` markers in one left-to-right pass; substituted
/// values are never rescanned.
pub fn render_template(
    template: &str,
    vars: &BTreeMap<&str, String>,
) -> Result<String, RenderError> {
    let mut out = String::with_capacity(template.len() * 2);
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after.find("}}").ok_or(RenderError::Unterminated(
            template.len() - rest.len() + start,
        ))?;
        let name = after[..end].trim();
        let value = vars
            .get(name)
            .ok_or_else(|| RenderError::MissingVariable(name.to_string()))?;
        out.push_str(value);
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Everything a prompt shows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptFields<'a> {
    pub direction: Direction,
    pub env: &'a EnvironmentInfo,
    pub code: &'a str,
    pub inputs_shown: &'a str,
    /// Expected outputs, shown only for backward tasks.
    pub gt_stdout: &'a str,
    pub gt_stderr: &'a str,
    pub mask_ids: &'a [u32],
}

/// Text for the inputs section.
pub fn render_inputs(input: &InputSpec) -> String {
    match input {
        InputSpec::NoInput => "The program receives no input.".to_string(),
        InputSpec::Stdin(text) => format!(
            "The following text is piped to standard input:\n```text\n{}\n```",
            block_body(text)
        ),
        InputSpec::FunctionInput(call) => format!(
            "The last line of the code calls `{}` and prints the result.",
            call.trim()
        ),
    }
}

/// Content placed between fence lines; a single final newline is implied by
/// the closing fence.
fn block_body(text: &str) -> &str {
    text.strip_suffix('\n').unwrap_or(text)
}

pub fn answer_tag(id: u32) -> String {
    format!("answer_{}", super::mask::placeholder(id))
}

pub fn render_prompt(fields: &PromptFields<'_>) -> Result<String, RenderError> {
    let mut vars = BTreeMap::new();
    vars.insert("project_tree", fields.env.project_tree.clone());
    vars.insert("run_command", fields.env.run_command.clone());
    vars.insert("timestamp", fields.env.timestamp.clone());
    vars.insert("snippet_path", fields.env.snippet_path.clone());
    vars.insert("code", block_body(fields.code).to_string());
    vars.insert("inputs", fields.inputs_shown.to_string());
    let template = match fields.direction {
        Direction::Forward => FORWARD_TEMPLATE,
        Direction::Backward => {
            vars.insert("gt_stdout", block_body(fields.gt_stdout).to_string());
            vars.insert("gt_stderr", block_body(fields.gt_stderr).to_string());
            let blocks: Vec<String> = fields
                .mask_ids
                .iter()
                .map(|&id| {
                    format!(
                        "```{}\n<original line {}>\n```",
                        answer_tag(id),
                        super::mask::placeholder(id)
                    )
                })
                .collect();
            vars.insert("answer_blocks", blocks.join("\n\n"));
            BACKWARD_TEMPLATE
        }
    };
    render_template(template, &vars)
}
