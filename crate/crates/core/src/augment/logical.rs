//! Operator and condition mutations on the token-level syntax tree.
//!
//! Sites are found on the lossless token stream, so every edit is a splice
//! at a token boundary and all untouched trivia survives byte for byte.

use rand::seq::index::sample;
use rand::Rng;

use super::{EditKind, EditRecord, EditTarget};
use crate::pylang::lexer::{next_significant, prev_significant};
use crate::pylang::{tokenize, Token, TokenKind};

/// Operator rewrites applied at a single token.
pub const MUTATION_TABLE: &[(&str, &str, EditKind)] = &[
    ("==", "!=", EditKind::Comparison),
    ("!=", "==", EditKind::Comparison),
    ("<", ">=", EditKind::Comparison),
    (">", "<=", EditKind::Comparison),
    ("<=", ">", EditKind::Comparison),
    (">=", "<", EditKind::Comparison),
    ("+=", "-=", EditKind::AugAssign),
    ("-=", "+=", EditKind::AugAssign),
    ("*=", "/=", EditKind::AugAssign),
    ("/=", "*=", EditKind::AugAssign),
    ("and", "or", EditKind::BoolOp),
    ("or", "and", EditKind::BoolOp),
];

#[derive(Debug, Clone, PartialEq, Eq)]
struct Splice {
    offset: usize,
    before: String,
    after: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Site {
    kind: EditKind,
    splices: Vec<Splice>,
}

fn table_lookup(text: &str) -> Option<(&'static str, EditKind)> {
    MUTATION_TABLE
        .iter()
        .find(|(from, _, _)| *from == text)
        .map(|(_, to, kind)| (*to, *kind))
}

fn is_unary_position(tokens: &[Token], src: &str, idx: usize) -> bool {
    let Some(p) = prev_significant(tokens, idx) else {
        return true;
    };
    let prev = &tokens[p];
    match prev.kind {
        TokenKind::Newline => true,
        TokenKind::Op => !matches!(prev.text(src), ")" | "]" | "}" | "..."),
        TokenKind::Keyword => !matches!(prev.text(src), "True" | "False" | "None"),
        _ => false,
    }
}

fn replace(tok: &Token, src: &str, after: &str, kind: EditKind) -> Site {
    Site {
        kind,
        splices: vec![Splice {
            offset: tok.span.start,
            before: tok.text(src).to_string(),
            after: after.to_string(),
        }],
    }
}

/// Negation toggle for the condition of an `if`/`elif`/`while` header.
fn condition_site(tokens: &[Token], src: &str, kw: usize) -> Option<Site> {
    let first = next_significant(tokens, kw)?;
    let mut last = None;
    let mut i = first;
    loop {
        let t = tokens.get(i)?;
        if t.depth == 0 {
            match (t.kind, t.text(src)) {
                (TokenKind::Op, ":") => break,
                (TokenKind::Keyword, "lambda")
                | (TokenKind::Newline, _)
                | (TokenKind::Error, _) => return None,
                _ => {}
            }
        }
        if !t.is_trivia() {
            last = Some(i);
        }
        i += 1;
    }
    let last = last?;
    let head = &tokens[first];
    if head.kind == TokenKind::Keyword && head.text(src) == "not" {
        let after_not = next_significant(tokens, first)?;
        if after_not > last {
            return None;
        }
        let end = tokens[after_not].span.start;
        return Some(Site {
            kind: EditKind::ConditionNegate,
            splices: vec![Splice {
                offset: head.span.start,
                before: src[head.span.start..end].to_string(),
                after: String::new(),
            }],
        });
    }
    Some(Site {
        kind: EditKind::ConditionNegate,
        splices: vec![
            Splice {
                offset: head.span.start,
                before: String::new(),
                after: "not (".into(),
            },
            Splice {
                offset: tokens[last].span.end,
                before: String::new(),
                after: ")".into(),
            },
        ],
    })
}

/// All eligible mutation sites in `src`, in document order.
pub(crate) fn find_sites(src: &str) -> Vec<Site> {
    let tokens = tokenize(src);
    let mut sites = Vec::new();
    for (idx, tok) in tokens.iter().enumerate() {
        let text = tok.text(src);
        match tok.kind {
            TokenKind::Op => {
                if let Some((to, kind)) = table_lookup(text) {
                    sites.push(replace(tok, src, to, kind));
                } else if (text == "-" || text == "+") && is_unary_position(&tokens, src, idx) {
                    let to = if text == "-" { "+" } else { "-" };
                    sites.push(replace(tok, src, to, EditKind::UnaryOp));
                }
            }
            TokenKind::Keyword => match text {
                "and" | "or" => {
                    let (to, kind) = table_lookup(text).expect("boolean ops are in the table");
                    sites.push(replace(tok, src, to, kind));
                }
                "if" | "elif" | "while" if tok.line_start => {
                    if let Some(site) = condition_site(&tokens, src, idx) {
                        sites.push(site);
                    }
                }
                _ => {}
            },
            _ => {}
        }
    }
    sites
}

/// Applies up to `max_edits` uniformly chosen sites. Returns `None` when the
/// source has no eligible site.
pub(crate) fn mutate<R: Rng>(
    src: &str,
    max_edits: usize,
    rng: &mut R,
) -> Option<(String, Vec<EditRecord>)> {
    let sites = find_sites(src);
    if sites.is_empty() {
        return None;
    }
    let count = max_edits.min(sites.len());
    let mut chosen: Vec<(EditKind, Splice)> = sample(rng, sites.len(), count)
        .into_iter()
        .flat_map(|i| {
            let site = &sites[i];
            site.splices.iter().map(move |s| (site.kind, s.clone()))
        })
        .collect();
    // Right to left keeps earlier offsets valid; at a shared offset the
    // replacement goes first so an insertion lands in front of it.
    chosen.sort_by(|(_, a), (_, b)| {
        b.offset
            .cmp(&a.offset)
            .then_with(|| a.before.is_empty().cmp(&b.before.is_empty()))
    });
    let mut text = src.to_string();
    let mut edits = Vec::with_capacity(chosen.len());
    for (kind, splice) in chosen {
        text.replace_range(
            splice.offset..splice.offset + splice.before.len(),
            &splice.after,
        );
        edits.push(EditRecord {
            kind,
            target: EditTarget::Source,
            offset: splice.offset,
            before: splice.before,
            after: splice.after,
        });
    }
    Some((text, edits))
}

/// Tokens whose deletion is certain to break parsing: colons at bracket
/// depth zero and closing parentheses.
pub(crate) fn syntax_break_sites(src: &str) -> Vec<(usize, String)> {
    tokenize(src)
        .into_iter()
        .filter(|t| {
            t.kind == TokenKind::Op && ((t.text(src) == ":" && t.depth == 0) || t.text(src) == ")")
        })
        .map(|t| (t.span.start, t.text(src).to_string()))
        .collect()
}
