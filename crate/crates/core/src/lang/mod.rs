//! The ScenL language: lexing, parsing, canonical formatting, static
//! validation and macro expansion.

mod ast;
mod diag;
mod format;
mod macros;
mod parser;
mod token;
mod validate;

use thiserror::Error;

pub use ast::{Call, CallKind, Cond, Instr, InstrKind, Program, Variable};
pub use diag::{has_errors, Diagnostic, Severity, Span};
pub use format::format;
pub use macros::{expand_macros, parse_macro_library, LibraryError, MacroError};
pub use parser::parse;
pub use token::{tokenize, Keyword, Symbol, Token, TokenKind};
pub use validate::{resolve, validate};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SyntaxError {
    #[error("{message}")]
    Lex { span: Span, message: String },
    #[error("expected {}, found {found}", expected.join(" or "))]
    Parse {
        span: Span,
        expected: Vec<String>,
        found: String,
    },
}

impl SyntaxError {
    pub fn span(&self) -> Span {
        match self {
            SyntaxError::Lex { span, .. } | SyntaxError::Parse { span, .. } => *span,
        }
    }

    pub fn to_diagnostic(&self) -> Diagnostic {
        let code = match self {
            SyntaxError::Lex { .. } => "lex-error",
            SyntaxError::Parse { .. } => "parse-error",
        };
        Diagnostic::error(code, self.to_string(), self.span())
    }
}

/// Parses and validates in one go, turning syntax errors into diagnostics.
pub fn check(source: &str, registry: &crate::event::Registry) -> Vec<Diagnostic> {
    match parse(source) {
        Ok(p) => validate(&p, registry),
        Err(e) => vec![e.to_diagnostic()],
    }
}
