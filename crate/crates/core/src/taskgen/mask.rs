use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Prefix of placeholder lines; the mask id follows it.
pub const PLACEHOLDER_PREFIX: &str = "MASKED_LINE_";
/// Upper bound on masks per task.
pub const MAX_MASKS: usize = 3;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MaskError {
    #[error("mask count {count} outside 1..={max} for {eligible} eligible lines")]
    CountOutOfRange {
        count: usize,
        max: usize,
        eligible: usize,
    },
    #[error("no maskable lines")]
    NoEligibleLines,
    #[error("source already contains the placeholder prefix")]
    PlaceholderCollision,
    #[error("mask id {0} is not part of this task")]
    UnknownMask(u32),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskEntry {
    pub mask_id: u32,
    /// The full original line, indentation included, without its line break.
    pub original_line: String,
    /// Zero-based line number.
    pub line_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedSource {
    pub masked: String,
    pub mask_map: Vec<MaskEntry>,
}

pub fn placeholder(id: u32) -> String {
    format!("{PLACEHOLDER_PREFIX}{id}")
}

/// Splits into (body, terminator) pairs; concatenating them rebuilds `src`.
fn lines_with_endings(src: &str) -> Vec<(&str, &str)> {
    src.split_inclusive('\n')
        .map(|l| {
            let body = l
                .strip_suffix('\n')
                .map_or(l, |b| b.strip_suffix('\r').unwrap_or(b));
            (body, &l[body.len()..])
        })
        .collect()
}

fn is_eligible(line: &str) -> bool {
    let t = line.trim();
    !t.is_empty() && !t.starts_with('#')
}

fn indentation(line: &str) -> &str {
    &line[..line.len() - line.trim_start().len()]
}

/// Indices of lines that may be masked.
pub fn eligible_lines(src: &str) -> Vec<usize> {
    lines_with_endings(src)
        .iter()
        .enumerate()
        .filter(|(_, (body, _))| is_eligible(body))
        .map(|(i, _)| i)
        .collect()
}

/// Largest permitted mask count: 30% of eligible lines, at most [`MAX_MASKS`].
pub fn max_mask_count(eligible: usize) -> usize {
    (eligible * 3 / 10).min(MAX_MASKS)
}

/// Replaces `count` seeded, distinct eligible lines with placeholders whose
/// ids run 0.. in document order; each placeholder keeps its line's indent.
pub fn mask_source(src: &str, count: usize, rng_seed: u64) -> Result<MaskedSource, MaskError> {
    if src.contains(PLACEHOLDER_PREFIX) {
        return Err(MaskError::PlaceholderCollision);
    }
    let eligible = eligible_lines(src);
    if eligible.is_empty() {
        return Err(MaskError::NoEligibleLines);
    }
    let max = max_mask_count(eligible.len());
    if count == 0 || count > max {
        return Err(MaskError::CountOutOfRange {
            count,
            max,
            eligible: eligible.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut chosen: Vec<usize> = sample(&mut rng, eligible.len(), count)
        .into_iter()
        .map(|i| eligible[i])
        .collect();
    chosen.sort_unstable();

    let lines = lines_with_endings(src);
    let mut mask_map = Vec::with_capacity(count);
    let mut masked = String::with_capacity(src.len());
    let mut next = chosen.iter().peekable();
    for (i, (body, ending)) in lines.iter().enumerate() {
        if next.peek() == Some(&&i) {
            next.next();
            let id = mask_map.len() as u32;
            masked.push_str(indentation(body));
            masked.push_str(&placeholder(id));
            mask_map.push(MaskEntry {
                mask_id: id,
                original_line: body.to_string(),
                line_index: i,
            });
        } else {
            masked.push_str(body);
        }
        masked.push_str(ending);
    }
    Ok(MaskedSource { masked, mask_map })
}

/// Replaces each masked line with its fill. Fills lacking leading whitespace
/// on their first line adopt the placeholder's indentation on every
/// non-empty line.
pub fn fill_masks(
    masked: &str,
    mask_map: &[MaskEntry],
    fills: &[(u32, String)],
) -> Result<String, MaskError> {
    let mut lines: Vec<(String, &str)> = lines_with_endings(masked)
        .into_iter()
        .map(|(b, e)| (b.to_string(), e))
        .collect();
    for (id, fill) in fills {
        let entry = mask_map
            .iter()
            .find(|m| m.mask_id == *id)
            .ok_or(MaskError::UnknownMask(*id))?;
        let Some((body, _)) = lines.get_mut(entry.line_index) else {
            return Err(MaskError::UnknownMask(*id));
        };
        let indent = indentation(body).to_string();
        let adopt = !fill.starts_with([' ', '\t']);
        let replaced: Vec<String> = fill
            .split('\n')
            .map(|l| {
                if adopt && !l.trim().is_empty() {
                    format!("{indent}{l}")
                } else {
                    l.to_string()
                }
            })
            .collect();
        *body = replaced.join("\n");
    }
    Ok(lines.into_iter().map(|(b, e)| b + e).collect())
}

/// Restores the original lines, reproducing the unmasked source.
pub fn unmask(masked: &str, mask_map: &[MaskEntry]) -> String {
    let fills: Vec<(u32, String)> = mask_map
        .iter()
        .map(|m| (m.mask_id, m.original_line.clone()))
        .collect();
    fill_masks(masked, mask_map, &fills).expect("every entry belongs to this map")
}
