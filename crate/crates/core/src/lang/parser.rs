//! Recursive-descent parser.
//!
//! Every instruction is recognised from its first token:
//!
//! | first token | instruction                     |
//! |-------------|---------------------------------|
//! | identifier  | `t.f(arg)` action               |
//! | `°`         | `°t.f(arg)°` interruptible      |
//! | integer     | `n*( ... )` repeat              |
//! | `*`         | `*[cond]( ... )` while          |
//! | `[`         | `[cond]( ... )!( ... )` if/else |
//! | `<`         | `<cond>( ... )` event wait      |
//! | `/`         | `/( ..., ... )` parallel        |
//! | `WAIT`      | `WAIT(n)` timer                 |
//! | `BREAK`     | break                           |
//! | `@`         | `@name` macro call              |
//!
//! Each instruction is terminated by `;`. The terminator may be omitted on the
//! last instruction of a list (before `)`, `,` or end of input).

use super::ast::{Call, Cond, Instr, InstrKind, Program, Variable};
use super::diag::Span;
use super::token::{tokenize, Keyword, Symbol, Token, TokenKind};
use super::SyntaxError;

pub fn parse(source: &str) -> Result<Program, SyntaxError> {
    let tokens = tokenize(source)?;
    let mut parser = Parser {
        tokens: &tokens,
        pos: 0,
        eof: Span::new(source.len(), source.len()),
    };
    let instructions = parser.instructions(&[])?;
    if let Some(tok) = parser.peek() {
        return Err(parser.unexpected(tok, &["`;`"]));
    }
    Ok(Program { instructions })
}

struct Parser<'t> {
    tokens: &'t [Token],
    pos: usize,
    eof: Span,
}

impl<'t> Parser<'t> {
    fn peek(&self) -> Option<&'t Token> {
        self.tokens.get(self.pos)
    }

    fn peek_is(&self, sym: Symbol) -> bool {
        self.peek().is_some_and(|t| t.is(sym))
    }

    fn bump(&mut self) -> &'t Token {
        let tok = &self.tokens[self.pos];
        self.pos += 1;
        tok
    }

    fn unexpected(&self, tok: &Token, expected: &[&str]) -> SyntaxError {
        SyntaxError::Parse {
            span: tok.span,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: format!("`{}`", tok.lexeme),
        }
    }

    fn unexpected_here(&self, expected: &[&str]) -> SyntaxError {
        match self.peek() {
            Some(tok) => self.unexpected(tok, expected),
            None => SyntaxError::Parse {
                span: self.eof,
                expected: expected.iter().map(|s| s.to_string()).collect(),
                found: "end of input".to_string(),
            },
        }
    }

    fn expect(&mut self, sym: Symbol) -> Result<&'t Token, SyntaxError> {
        if self.peek_is(sym) {
            Ok(self.bump())
        } else {
            Err(self.unexpected_here(&[&format!("`{}`", sym.as_str())]))
        }
    }

    fn expect_ident(&mut self) -> Result<&'t Token, SyntaxError> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Identifier => Ok(self.bump()),
            _ => Err(self.unexpected_here(&["identifier"])),
        }
    }

    fn expect_nb(&mut self) -> Result<(u32, Span), SyntaxError> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Integer => {
                self.bump();
                let value = t.lexeme.parse::<u32>().map_err(|_| SyntaxError::Parse {
                    span: t.span,
                    expected: vec!["integer in 0..=4294967295".to_string()],
                    found: format!("`{}`", t.lexeme),
                })?;
                Ok((value, t.span))
            }
            _ => Err(self.unexpected_here(&["integer"])),
        }
    }

    fn prev_span(&self) -> Span {
        self.tokens[self.pos - 1].span
    }

    /// `instr ; { instr ; }`, stopping before any token in `closers` (or at
    /// end of input when `closers` is empty).
    fn instructions(&mut self, closers: &[Symbol]) -> Result<Vec<Instr>, SyntaxError> {
        let mut list = vec![self.instr()?];
        loop {
            if self.peek_is(Symbol::Semi) {
                self.bump();
            } else if self.at_list_end(closers) {
                return Ok(list);
            } else {
                let mut expected = vec!["`;`".to_string()];
                expected.extend(closers.iter().map(|s| format!("`{}`", s.as_str())));
                let expected: Vec<&str> = expected.iter().map(String::as_str).collect();
                return Err(self.unexpected_here(&expected));
            }
            if self.at_list_end(closers) {
                return Ok(list);
            }
            list.push(self.instr()?);
        }
    }

    fn at_list_end(&self, closers: &[Symbol]) -> bool {
        match self.peek() {
            None => true,
            Some(t) => closers.iter().any(|&s| t.is(s)),
        }
    }

    /// `( instructions )`
    fn block(&mut self) -> Result<Vec<Instr>, SyntaxError> {
        self.expect(Symbol::LParen)?;
        let body = self.instructions(&[Symbol::RParen])?;
        self.expect(Symbol::RParen)?;
        Ok(body)
    }

    fn instr(&mut self) -> Result<Instr, SyntaxError> {
        let Some(first) = self.peek() else {
            return Err(self.unexpected_here(&["instruction"]));
        };
        let start = first.span;
        let kind = match first.kind {
            TokenKind::Identifier => InstrKind::Action(self.call()?),
            TokenKind::Symbol(Symbol::Degree) => {
                self.bump();
                let call = self.call()?;
                self.expect(Symbol::Degree)?;
                InstrKind::ActionInterrupt(call)
            }
            TokenKind::Integer => {
                let (count, _) = self.expect_nb()?;
                self.expect(Symbol::Star)?;
                InstrKind::Repeat {
                    count,
                    body: self.block()?,
                }
            }
            TokenKind::Symbol(Symbol::Star) => {
                self.bump();
                self.expect(Symbol::LBracket)?;
                let cond = self.cond()?;
                self.expect(Symbol::RBracket)?;
                InstrKind::While {
                    cond,
                    body: self.block()?,
                }
            }
            TokenKind::Symbol(Symbol::LBracket) => {
                self.bump();
                let cond = self.cond()?;
                self.expect(Symbol::RBracket)?;
                let then_body = self.block()?;
                // after a then-block `!` can only introduce the else-block
                let else_body = if self.peek_is(Symbol::Bang) {
                    self.bump();
                    Some(self.block()?)
                } else {
                    None
                };
                InstrKind::Conditional {
                    cond,
                    then_body,
                    else_body,
                }
            }
            TokenKind::Symbol(Symbol::Lt) => {
                self.bump();
                let cond = self.cond()?;
                self.expect(Symbol::Gt)?;
                InstrKind::EventWait {
                    cond,
                    body: self.block()?,
                }
            }
            TokenKind::Symbol(Symbol::Slash) => {
                self.bump();
                self.expect(Symbol::LParen)?;
                let mut branches = vec![self.instructions(&[Symbol::Comma, Symbol::RParen])?];
                while self.peek_is(Symbol::Comma) {
                    self.bump();
                    branches.push(self.instructions(&[Symbol::Comma, Symbol::RParen])?);
                }
                if branches.len() < 2 {
                    return Err(self.unexpected_here(&["`,`"]));
                }
                self.expect(Symbol::RParen)?;
                InstrKind::Parallel(branches)
            }
            TokenKind::Keyword(Keyword::Wait) => {
                self.bump();
                self.expect(Symbol::LParen)?;
                let (n, _) = self.expect_nb()?;
                self.expect(Symbol::RParen)?;
                InstrKind::Timer(n)
            }
            TokenKind::Keyword(Keyword::Break) => {
                self.bump();
                InstrKind::Break
            }
            TokenKind::Symbol(Symbol::At) => {
                self.bump();
                let name = self.expect_ident()?;
                InstrKind::MacroCall(name.lexeme.clone())
            }
            _ => return Err(self.unexpected(first, &["instruction"])),
        };
        Ok(Instr::spanned(kind, start.to(self.prev_span())))
    }

    /// `ident . ident ( [variable { , variable }] )`
    fn call(&mut self) -> Result<Call, SyntaxError> {
        let target = self.expect_ident()?;
        self.expect(Symbol::Dot)?;
        let function = self.expect_ident()?;
        self.expect(Symbol::LParen)?;
        let mut args = Vec::new();
        if !self.peek_is(Symbol::RParen) {
            args.push(self.variable()?);
            while self.peek_is(Symbol::Comma) {
                self.bump();
                args.push(self.variable()?);
            }
        }
        self.expect(Symbol::RParen)?;
        Ok(Call {
            target: target.lexeme.clone(),
            function: function.lexeme.clone(),
            args,
            kind: None,
            span: target.span.to(self.prev_span()),
        })
    }

    fn variable(&mut self) -> Result<Variable, SyntaxError> {
        if self.peek().is_some_and(|t| t.kind == TokenKind::Integer) {
            let (n, _) = self.expect_nb()?;
            return Ok(Variable::Number(n));
        }
        Ok(match self.cond()? {
            Cond::Atom(call) => Variable::IntegerCall(call),
            other => Variable::CondArg(other),
        })
    }

    /// `or := and { | and }`
    fn cond(&mut self) -> Result<Cond, SyntaxError> {
        let mut left = self.cond_and()?;
        while self.peek_is(Symbol::Pipe) {
            self.bump();
            let right = self.cond_and()?;
            left = Cond::or(left, right);
        }
        Ok(left)
    }

    /// `and := unary { & unary }`
    fn cond_and(&mut self) -> Result<Cond, SyntaxError> {
        let mut left = self.cond_unary()?;
        while self.peek_is(Symbol::Amp) {
            self.bump();
            let right = self.cond_unary()?;
            left = Cond::and(left, right);
        }
        Ok(left)
    }

    fn cond_unary(&mut self) -> Result<Cond, SyntaxError> {
        match self.peek() {
            Some(t) if t.is(Symbol::Bang) => {
                self.bump();
                self.expect(Symbol::LParen)?;
                let inner = self.cond()?;
                self.expect(Symbol::RParen)?;
                Ok(Cond::negate(inner))
            }
            Some(t) if t.is(Symbol::LParen) => {
                self.bump();
                let inner = self.cond()?;
                self.expect(Symbol::RParen)?;
                Ok(Cond::group(inner))
            }
            Some(t) if t.kind == TokenKind::Identifier => Ok(Cond::Atom(self.call()?)),
            _ => Err(self.unexpected_here(&["condition"])),
        }
    }
}
