//! Expression DSL in which plants and control laws are written.
//!
//! Expressions are parsed once into an [`Expr`] tree and evaluated
//! pointwise; everything downstream (models, estimators, certifiers)
//! sees only evaluable functions.

mod ast;
mod lexer;
mod parser;
mod system;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use ast::{BinOp, Environment, EvalError, Expr, Func, MapEnv, SlotEnv, Var};
pub use lexer::{tokenize, Token, TokenKind};
pub use parser::{parse_expression, parse_expression_bytes};
pub use system::{parse_system, ParamMode, SystemDef};

/// Position-annotated parse failure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseDiagnostic {
    /// Byte offset into the source text.
    pub offset: usize,
    /// 1-based line.
    pub line: usize,
    /// 1-based column, counted in characters.
    pub column: usize,
    pub message: String,
    pub expected: Vec<String>,
}

impl ParseDiagnostic {
    pub(crate) fn at(src: &str, offset: usize, message: String, expected: &[&str]) -> Self {
        let offset = offset.min(src.len());
        let (line, column) = line_col(src, offset);
        ParseDiagnostic {
            offset,
            line,
            column,
            message,
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Re-anchors a diagnostic produced for a substring that starts at
    /// `base` inside `outer`.
    pub(crate) fn shifted(self, outer: &str, base: usize) -> Self {
        let offset = (base + self.offset).min(outer.len());
        let (line, column) = line_col(outer, offset);
        ParseDiagnostic { offset, line, column, ..self }
    }
}

fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let mut end = offset.min(src.len());
    while !src.is_char_boundary(end) {
        end -= 1;
    }
    let before = &src[..end];
    let line = before.matches('\n').count() + 1;
    let line_start = before.rfind('\n').map_or(0, |i| i + 1);
    let column = before[line_start..].chars().count() + 1;
    (line, column)
}

impl fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.column, self.message)?;
        if !self.expected.is_empty() {
            write!(f, " (expected one of: {})", self.expected.join(", "))?;
        }
        Ok(())
    }
}

impl std::error::Error for ParseDiagnostic {}
