//! Snippet-language profile: Python 3, run through the `python3` reference
//! interpreter.

pub mod lexer;

use rustpython_parser::{ast, Parse};

pub use lexer::{tokenize, NumberKind, Token, TokenKind};

/// File extension of the designated snippet path.
pub const EXTENSION: &str = "py";

/// Default interpreter command.
pub const DEFAULT_INTERPRETER: &str = "python3";

/// Error name raised for syntax errors.
pub const SYNTAX_ERROR_NAME: &str = "SyntaxError";

/// Error names accepted as logical errors in training samples.
pub const LOGICAL_ERROR_NAMES: [&str; 6] = [
    "IndexError",
    "ValueError",
    "NameError",
    "TypeError",
    "KeyError",
    "ZeroDivisionError",
];

/// Plotting and GUI packages that mark a snippet as visualization-related.
pub const DEFAULT_VISUALIZATION_MODULES: &[&str] = &[
    "matplotlib",
    "pylab",
    "seaborn",
    "plotly",
    "bokeh",
    "altair",
    "pygal",
    "graphviz",
    "mayavi",
    "vispy",
    "pyglet",
    "pygame",
    "turtle",
    "tkinter",
    "Tkinter",
    "PyQt4",
    "PyQt5",
    "PyQt6",
    "PySide2",
    "PySide6",
    "wx",
    "kivy",
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("syntax error: {message}")]
pub struct SyntaxError {
    pub message: String,
}

/// Checks that `src` parses as a module.
pub fn check_module(src: &str) -> Result<(), SyntaxError> {
    ast::Suite::parse(src, "<snippet>")
        .map(|_| ())
        .map_err(|e| SyntaxError {
            message: e.to_string(),
        })
}

/// Checks that `src` parses as a single expression.
pub fn check_expression(src: &str) -> Result<(), SyntaxError> {
    ast::Expr::parse(src, "<input>")
        .map(|_| ())
        .map_err(|e| SyntaxError {
            message: e.to_string(),
        })
}

/// Top-level package names imported anywhere in `src`, in order of
/// appearance. Covers `import a.b as c, d` and `from a.b import c`; relative
/// imports are ignored.
pub fn imported_packages(src: &str) -> Vec<String> {
    let tokens: Vec<_> = tokenize(src)
        .into_iter()
        .filter(|t| !t.is_trivia())
        .collect();
    let text = |i: usize| tokens[i].text(src);
    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        if tokens[i].kind == TokenKind::Keyword && tokens[i].line_start
            || after_semicolon(&tokens, src, i)
        {
            match text(i) {
                "import" => {
                    // import a.b as c, d
                    let mut j = i + 1;
                    let mut expect_name = true;
                    while j < tokens.len() && tokens[j].kind != TokenKind::Newline {
                        let t = text(j);
                        if t == ";" {
                            break;
                        }
                        if expect_name && tokens[j].kind == TokenKind::Name {
                            out.push(t.to_string());
                            expect_name = false;
                        } else if t == "," {
                            expect_name = true;
                        }
                        j += 1;
                    }
                    i = j;
                    continue;
                }
                "from" => {
                    if let Some(next) = tokens.get(i + 1) {
                        if next.kind == TokenKind::Name {
                            out.push(text(i + 1).to_string());
                        }
                    }
                }
                _ => {}
            }
        }
        i += 1;
    }
    out
}

fn after_semicolon(tokens: &[Token], src: &str, i: usize) -> bool {
    i > 0 && tokens[i - 1].text(src) == ";" && tokens[i].kind == TokenKind::Keyword
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn module_and_expression_checks() {
        assert!(check_module("if a < b:\n    x += 1\n").is_ok());
        assert!(check_module("if a < b\n    x += 1\n").is_err());
        assert!(check_expression("f(2, 5)").is_ok());
        assert!(check_expression("f(2, 5); import os").is_err());
        assert!(check_expression("f(2,").is_err());
    }

    #[test]
    fn finds_imports() {
        let src = "import os, matplotlib.pyplot as plt\nfrom seaborn import x\nfrom . import y\ns = 'import tkinter'\n# import turtle\nimport numpy as np; import pygame\n";
        assert_eq!(
            imported_packages(src),
            vec!["os", "matplotlib", "seaborn", "numpy", "pygame"]
        );
    }

    #[test]
    fn indented_imports_count() {
        let src = "def f():\n    import turtle\n    return 1\n";
        assert_eq!(imported_packages(src), vec!["turtle"]);
    }
}
