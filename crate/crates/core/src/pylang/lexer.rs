//! Lossless tokenizer for the snippet language.
//!
//! Every byte of the input belongs to exactly one token, so concatenating
//! token texts reproduces the source. Whitespace, comments, and line
//! continuations are kept as trivia tokens; mutation passes splice edits into
//! the original text by token span and never re-render untouched regions.

use std::ops::Range;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NumberKind {
    /// Decimal integer such as `10` or `1_000`.
    DecimalInt,
    /// Float or imaginary literal (`1.5`, `2e10`, `3j`).
    Float,
    /// `0x`, `0o`, or `0b` literal.
    Prefixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Name,
    Keyword,
    Number(NumberKind),
    String,
    Op,
    Comment,
    /// Spaces and tabs.
    Whitespace,
    /// Backslash followed by a line break.
    Continuation,
    /// Line break ending a logical line.
    Newline,
    /// Line break inside brackets or on a blank/comment-only line.
    Nl,
    /// Bytes that could not be tokenized (unterminated strings, stray chars).
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub span: Range<usize>,
    /// Bracket nesting depth before this token.
    pub depth: u32,
    /// True for the first significant token of a logical line.
    pub line_start: bool,
}

impl Token {
    pub fn text<'a>(&self, src: &'a str) -> &'a str {
        &src[self.span.clone()]
    }

    pub fn is_trivia(&self) -> bool {
        matches!(
            self.kind,
            TokenKind::Whitespace | TokenKind::Comment | TokenKind::Continuation | TokenKind::Nl
        )
    }
}

pub const KEYWORDS: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class", "continue",
    "def", "del", "elif", "else", "except", "finally", "for", "from", "global", "if", "import",
    "in", "is", "lambda", "nonlocal", "not", "or", "pass", "raise", "return", "try", "while",
    "with", "yield",
];

// Longest first so the scanner can take the first prefix match.
const OPERATORS: &[&str] = &[
    "**=", "//=", ">>=", "<<=", "...", "->", ":=", "**", "//", ">>", "<<", "<=", ">=", "==", "!=",
    "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "@=", "+", "-", "*", "/", "%", "@", "&", "|",
    "^", "~", "<", ">", "(", ")", "[", "]", "{", "}", ",", ":", ";", ".", "=", "!",
];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.contains(&word)
}

fn is_ident_start(c: char) -> bool {
    c == '_' || c.is_alphabetic()
}

fn is_ident_continue(c: char) -> bool {
    c == '_' || c.is_alphanumeric()
}

struct Scanner<'a> {
    src: &'a str,
    pos: usize,
    depth: u32,
    tokens: Vec<Token>,
    at_line_start: bool,
}

impl<'a> Scanner<'a> {
    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn push(&mut self, kind: TokenKind, end: usize) {
        let significant = !matches!(
            kind,
            TokenKind::Whitespace
                | TokenKind::Comment
                | TokenKind::Continuation
                | TokenKind::Nl
                | TokenKind::Newline
        );
        let line_start = significant && self.at_line_start;
        if significant {
            self.at_line_start = false;
        }
        self.tokens.push(Token {
            kind,
            span: self.pos..end,
            depth: self.depth,
            line_start,
        });
        self.pos = end;
    }

    fn line_has_content(&self) -> bool {
        // Whether a significant token has appeared since the last Newline.
        !self.at_line_start
    }

    fn run(mut self) -> Vec<Token> {
        while let Some(c) = self.peek() {
            let start = self.pos;
            match c {
                ' ' | '\t' | '\x0c' => {
                    let len = self
                        .rest()
                        .find(|ch: char| !matches!(ch, ' ' | '\t' | '\x0c'))
                        .unwrap_or(self.rest().len());
                    self.push(TokenKind::Whitespace, start + len);
                }
                '\r' | '\n' => {
                    let len = if self.rest().starts_with("\r\n") {
                        2
                    } else {
                        1
                    };
                    let kind = if self.depth == 0 && self.line_has_content() {
                        TokenKind::Newline
                    } else {
                        TokenKind::Nl
                    };
                    self.push(kind, start + len);
                    if kind == TokenKind::Newline {
                        self.at_line_start = true;
                    }
                }
                '#' => {
                    let len = self.rest().find(['\r', '\n']).unwrap_or(self.rest().len());
                    self.push(TokenKind::Comment, start + len);
                }
                '\\' => {
                    let r = self.rest();
                    if r.starts_with("\\\r\n") {
                        self.push(TokenKind::Continuation, start + 3);
                    } else if r.starts_with("\\\n") || r.starts_with("\\\r") {
                        self.push(TokenKind::Continuation, start + 2);
                    } else {
                        self.push(TokenKind::Error, start + 1);
                    }
                }
                '0'..='9' => self.number(),
                '.' if self.rest()[1..].starts_with(|d: char| d.is_ascii_digit()) => self.number(),
                '"' | '\'' => self.string(start),
                c if is_ident_start(c) => {
                    if let Some(quote_at) = self.string_prefix_len() {
                        self.string(start + quote_at);
                    } else {
                        let len = self
                            .rest()
                            .find(|ch: char| !is_ident_continue(ch))
                            .unwrap_or(self.rest().len());
                        let word = &self.src[start..start + len];
                        let kind = if is_keyword(word) {
                            TokenKind::Keyword
                        } else {
                            TokenKind::Name
                        };
                        self.push(kind, start + len);
                    }
                }
                _ => {
                    if let Some(op) = OPERATORS.iter().find(|op| self.rest().starts_with(**op)) {
                        match *op {
                            "(" | "[" | "{" => {
                                self.push(TokenKind::Op, start + op.len());
                                self.depth += 1;
                            }
                            ")" | "]" | "}" => {
                                self.depth = self.depth.saturating_sub(1);
                                self.push(TokenKind::Op, start + op.len());
                            }
                            _ => self.push(TokenKind::Op, start + op.len()),
                        }
                    } else {
                        self.push(TokenKind::Error, start + c.len_utf8());
                    }
                }
            }
        }
        self.tokens
    }

    /// Length of a string prefix (`r`, `b`, `f`, `rb`, ...) when the current
    /// identifier-looking run is actually the start of a string literal.
    fn string_prefix_len(&self) -> Option<usize> {
        let r = self.rest();
        let ident_len = r.find(|ch: char| !is_ident_continue(ch)).unwrap_or(r.len());
        if ident_len == 0 || ident_len > 2 {
            return None;
        }
        let prefix = r[..ident_len].to_ascii_lowercase();
        let valid = matches!(
            prefix.as_str(),
            "r" | "u" | "b" | "f" | "br" | "rb" | "fr" | "rf"
        );
        if valid && r[ident_len..].starts_with(['"', '\'']) {
            Some(ident_len)
        } else {
            None
        }
    }

    fn string(&mut self, quote_at: usize) {
        let body = &self.src[quote_at..];
        let quote = &body[..1];
        let triple: String = quote.repeat(3);
        let (delim, multiline) = if body.starts_with(&triple) {
            (triple.as_str(), true)
        } else {
            (quote, false)
        };
        let mut i = quote_at + delim.len();
        let bytes = self.src.as_bytes();
        loop {
            if i >= bytes.len() {
                self.push(TokenKind::Error, bytes.len());
                return;
            }
            let b = bytes[i];
            if b == b'\\' {
                // Backslash protects the next byte even in raw strings.
                i += 2;
                continue;
            }
            if !multiline && (b == b'\n' || b == b'\r') {
                self.push(TokenKind::Error, i);
                return;
            }
            if self.src[i..].starts_with(delim) {
                self.push(TokenKind::String, i + delim.len());
                return;
            }
            i += 1;
        }
    }

    fn number(&mut self) {
        let start = self.pos;
        let r = self.rest();
        let b = r.as_bytes();
        let digits_from = |mut i: usize, pred: fn(u8) -> bool| {
            while i < b.len() && (pred(b[i]) || b[i] == b'_') {
                i += 1;
            }
            i
        };
        if b.len() > 1 && b[0] == b'0' && matches!(b[1], b'x' | b'X' | b'o' | b'O' | b'b' | b'B') {
            let end = digits_from(2, |c| c.is_ascii_hexdigit());
            self.push(TokenKind::Number(NumberKind::Prefixed), start + end);
            return;
        }
        let mut i = digits_from(0, |c| c.is_ascii_digit());
        let mut float = false;
        if i < b.len() && b[i] == b'.' {
            float = true;
            i = digits_from(i + 1, |c| c.is_ascii_digit());
        }
        if i < b.len() && matches!(b[i], b'e' | b'E') {
            let mut j = i + 1;
            if j < b.len() && matches!(b[j], b'+' | b'-') {
                j += 1;
            }
            if j < b.len() && b[j].is_ascii_digit() {
                float = true;
                i = digits_from(j, |c| c.is_ascii_digit());
            }
        }
        if i < b.len() && matches!(b[i], b'j' | b'J') {
            float = true;
            i += 1;
        }
        let kind = if float {
            NumberKind::Float
        } else {
            NumberKind::DecimalInt
        };
        self.push(TokenKind::Number(kind), start + i);
    }
}

/// Tokenizes `src` into a lossless token stream.
pub fn tokenize(src: &str) -> Vec<Token> {
    Scanner {
        src,
        pos: 0,
        depth: 0,
        tokens: Vec::new(),
        at_line_start: true,
    }
    .run()
}

/// Index of the previous significant token before `idx`, skipping trivia.
pub fn prev_significant(tokens: &[Token], idx: usize) -> Option<usize> {
    tokens[..idx].iter().rposition(|t| !t.is_trivia())
}

/// Index of the next significant token after `idx`, skipping trivia.
pub fn next_significant(tokens: &[Token], idx: usize) -> Option<usize> {
    tokens[idx + 1..]
        .iter()
        .position(|t| !t.is_trivia())
        .map(|p| p + idx + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<(TokenKind, &str)> {
        tokenize(src)
            .iter()
            .map(|t| (t.kind, t.text(src)))
            .collect()
    }

    #[test]
    fn lossless_on_mixed_source() {
        let src = "def f(a, b=2):\n    # note\n    return a <= b  # tail\n\nx = f'{1+2}' + r\"\\\"\" \\\n  + 0x1F\n";
        let joined: String = tokenize(src).iter().map(|t| t.text(src)).collect();
        assert_eq!(joined, src);
    }

    #[test]
    fn numbers_classified() {
        let src = "a = 10 + 1.5e3 + 0x1F + 3j + 1_000";
        let nums: Vec<_> = kinds(src)
            .into_iter()
            .filter_map(|(k, t)| match k {
                TokenKind::Number(n) => Some((n, t)),
                _ => None,
            })
            .collect();
        assert_eq!(
            nums,
            vec![
                (NumberKind::DecimalInt, "10"),
                (NumberKind::Float, "1.5e3"),
                (NumberKind::Prefixed, "0x1F"),
                (NumberKind::Float, "3j"),
                (NumberKind::DecimalInt, "1_000"),
            ]
        );
    }

    #[test]
    fn identifiers_keep_digits() {
        let toks = kinds("y3 = 10");
        assert_eq!(toks[0], (TokenKind::Name, "y3"));
    }

    #[test]
    fn strings_with_prefixes_and_triples() {
        let src = "s = b'x<y' + '''a\n<b'''\n";
        let toks = kinds(src);
        assert!(toks.contains(&(TokenKind::String, "b'x<y'")));
        assert!(toks.contains(&(TokenKind::String, "'''a\n<b'''")));
        assert!(!toks.iter().any(|(k, t)| *k == TokenKind::Op && *t == "<"));
    }

    #[test]
    fn operators_longest_match() {
        let ops: Vec<_> = kinds("a <<= b <= c < d -> e")
            .into_iter()
            .filter(|(k, _)| *k == TokenKind::Op)
            .map(|(_, t)| t)
            .collect();
        assert_eq!(ops, vec!["<<=", "<=", "<", "->"]);
    }

    #[test]
    fn newline_inside_brackets_is_nl() {
        let src = "x = (1,\n  2)\ny = 3\n";
        let toks = tokenize(src);
        let newlines: Vec<_> = toks
            .iter()
            .filter(|t| matches!(t.kind, TokenKind::Newline | TokenKind::Nl))
            .map(|t| t.kind)
            .collect();
        assert_eq!(
            newlines,
            vec![TokenKind::Nl, TokenKind::Newline, TokenKind::Newline]
        );
        let starts: Vec<_> = toks
            .iter()
            .filter(|t| t.line_start)
            .map(|t| t.text(src))
            .collect();
        assert_eq!(starts, vec!["x", "y"]);
    }

    #[test]
    fn unterminated_string_is_error() {
        let toks = kinds("x = 'abc\ny = 1\n");
        assert!(toks.iter().any(|(k, _)| *k == TokenKind::Error));
    }
}
