//! Lexer for ScenL source text.
//!
//! The language is driven by punctuation rather than keywords, so most of the
//! work here is classifying single characters. Whitespace and `#` comments are
//! trivia: they never produce tokens, but every byte of the input is either
//! inside a token or inside trivia.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::diag::Span;
use super::SyntaxError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Symbol {
    Semi,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Lt,
    Gt,
    Dot,
    Comma,
    Star,
    Bang,
    Slash,
    Amp,
    Pipe,
    /// U+00B0, delimits interruptible actions.
    Degree,
    At,
}

impl Symbol {
    pub fn as_str(self) -> &'static str {
        match self {
            Symbol::Semi => ";",
            Symbol::LParen => "(",
            Symbol::RParen => ")",
            Symbol::LBracket => "[",
            Symbol::RBracket => "]",
            Symbol::Lt => "<",
            Symbol::Gt => ">",
            Symbol::Dot => ".",
            Symbol::Comma => ",",
            Symbol::Star => "*",
            Symbol::Bang => "!",
            Symbol::Slash => "/",
            Symbol::Amp => "&",
            Symbol::Pipe => "|",
            Symbol::Degree => "°",
            Symbol::At => "@",
        }
    }

    fn from_char(c: char) -> Option<Symbol> {
        Some(match c {
            ';' => Symbol::Semi,
            '(' => Symbol::LParen,
            ')' => Symbol::RParen,
            '[' => Symbol::LBracket,
            ']' => Symbol::RBracket,
            '<' => Symbol::Lt,
            '>' => Symbol::Gt,
            '.' => Symbol::Dot,
            ',' => Symbol::Comma,
            '*' => Symbol::Star,
            '!' => Symbol::Bang,
            '/' => Symbol::Slash,
            '&' => Symbol::Amp,
            '|' => Symbol::Pipe,
            '\u{B0}' => Symbol::Degree,
            '@' => Symbol::At,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Keyword {
    Break,
    Wait,
}

impl Keyword {
    pub fn as_str(self) -> &'static str {
        match self {
            Keyword::Break => "BREAK",
            Keyword::Wait => "WAIT",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TokenKind {
    Symbol(Symbol),
    Identifier,
    Integer,
    Keyword(Keyword),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub kind: TokenKind,
    pub lexeme: String,
    pub span: Span,
}

impl Token {
    pub fn is(&self, sym: Symbol) -> bool {
        self.kind == TokenKind::Symbol(sym)
    }
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Symbol(s) => write!(f, "`{}`", s.as_str()),
            TokenKind::Identifier => f.write_str("identifier"),
            TokenKind::Integer => f.write_str("integer"),
            TokenKind::Keyword(k) => write!(f, "`{}`", k.as_str()),
        }
    }
}

/// Splits `source` into tokens.
///
/// Fails on the first byte that cannot start a token.
pub fn tokenize(source: &str) -> Result<Vec<Token>, SyntaxError> {
    let mut tokens = Vec::new();
    let mut chars = source.char_indices().peekable();

    while let Some(&(start, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        if c == '#' {
            while let Some(&(_, c)) = chars.peek() {
                if c == '\n' {
                    break;
                }
                chars.next();
            }
            continue;
        }
        if let Some(sym) = Symbol::from_char(c) {
            chars.next();
            let end = start + c.len_utf8();
            tokens.push(Token {
                kind: TokenKind::Symbol(sym),
                lexeme: source[start..end].to_string(),
                span: Span::new(start, end),
            });
            continue;
        }
        if c.is_ascii_digit() {
            let end = take_while(&mut chars, start, |c| c.is_ascii_digit());
            tokens.push(Token {
                kind: TokenKind::Integer,
                lexeme: source[start..end].to_string(),
                span: Span::new(start, end),
            });
            continue;
        }
        if c.is_ascii_alphabetic() {
            let end = take_while(&mut chars, start, |c| c.is_ascii_alphanumeric() || c == '_');
            let lexeme = &source[start..end];
            let kind = match lexeme {
                "BREAK" => TokenKind::Keyword(Keyword::Break),
                "WAIT" => TokenKind::Keyword(Keyword::Wait),
                _ => TokenKind::Identifier,
            };
            tokens.push(Token {
                kind,
                lexeme: lexeme.to_string(),
                span: Span::new(start, end),
            });
            continue;
        }

        let span = Span::new(start, start + c.len_utf8());
        let message = match c {
            '~' | '\'' | '`' => format!(
                "unexpected character `{c}`; interruptible actions are delimited by `°` (U+00B0), \
                 run `scenl fmt` to see the canonical form"
            ),
            _ => format!("unexpected character `{}`", c.escape_default()),
        };
        return Err(SyntaxError::Lex { span, message });
    }

    Ok(tokens)
}

fn take_while(
    chars: &mut std::iter::Peekable<std::str::CharIndices<'_>>,
    start: usize,
    pred: impl Fn(char) -> bool,
) -> usize {
    let mut end = start;
    while let Some(&(i, c)) = chars.peek() {
        if !pred(c) {
            break;
        }
        end = i + c.len_utf8();
        chars.next();
    }
    end
}
