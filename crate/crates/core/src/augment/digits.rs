//! Digit-level mutation of numeric literals.

use rand::Rng;

use super::{EditKind, EditRecord, EditTarget};
use crate::pylang::{tokenize, NumberKind, TokenKind};

const DIGITS: &[u8; 10] = b"0123456789";

/// Byte offsets of mutable digits in source code, paired with whether the
/// digit leads a multi-digit integer (and so must stay non-zero).
pub(crate) fn source_digit_sites(src: &str) -> Vec<(usize, bool)> {
    let mut sites = Vec::new();
    for tok in tokenize(src) {
        let TokenKind::Number(kind) = tok.kind else {
            continue;
        };
        if kind == NumberKind::Prefixed {
            continue;
        }
        let text = tok.text(src);
        let digit_count = text.bytes().filter(u8::is_ascii_digit).count();
        let leading_guard = kind == NumberKind::DecimalInt && digit_count > 1;
        if leading_guard && text.starts_with('0') {
            // `00` and friends: any change would create a leading zero.
            continue;
        }
        let mut first = true;
        for (i, b) in text.bytes().enumerate() {
            if b.is_ascii_digit() {
                sites.push((tok.span.start + i, leading_guard && first));
                first = false;
            }
        }
    }
    sites
}

/// Byte offsets of digits in free text that are not glued to letters or
/// underscores (so `abc1` is left alone but `3 4` is not).
pub(crate) fn text_digit_sites(text: &str) -> Vec<(usize, bool)> {
    let b = text.as_bytes();
    let word = |c: u8| c.is_ascii_alphabetic() || c == b'_';
    let mut sites = Vec::new();
    let mut i = 0;
    while i < b.len() {
        if b[i].is_ascii_digit() {
            let start = i;
            while i < b.len() && b[i].is_ascii_digit() {
                i += 1;
            }
            let glued = (start > 0 && word(b[start - 1])) || (i < b.len() && word(b[i]));
            if !glued {
                sites.extend((start..i).map(|p| (p, false)));
            }
        } else {
            i += 1;
        }
    }
    sites
}

/// Replaces each site's digit with probability `prob` by a uniformly chosen
/// different digit.
pub(crate) fn mutate_sites<R: Rng>(
    text: &str,
    sites: &[(usize, bool)],
    prob: f64,
    target: EditTarget,
    rng: &mut R,
) -> (String, Vec<EditRecord>) {
    let mut bytes = text.as_bytes().to_vec();
    let mut edits = Vec::new();
    for &(pos, nonzero) in sites {
        if prob <= 0.0 || !rng.random_bool(prob.min(1.0)) {
            continue;
        }
        let current = bytes[pos];
        let choices: Vec<u8> = DIGITS
            .iter()
            .copied()
            .filter(|&d| d != current && !(nonzero && d == b'0'))
            .collect();
        let replacement = choices[rng.random_range(0..choices.len())];
        bytes[pos] = replacement;
        edits.push(EditRecord {
            kind: EditKind::Digit,
            target,
            offset: pos,
            before: (current as char).to_string(),
            after: (replacement as char).to_string(),
        });
    }
    // Only ASCII digits were swapped for ASCII digits.
    (
        String::from_utf8(bytes).expect("digit swap keeps utf-8"),
        edits,
    )
}
