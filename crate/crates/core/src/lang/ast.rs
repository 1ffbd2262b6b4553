//! Syntax tree for ScenL programs.
//!
//! Source positions are carried on [`Instr`] and [`Call`] for diagnostics but
//! do not participate in equality: two programs are equal when their
//! structure is, wherever they came from.

use serde::{Deserialize, Serialize};

use super::diag::Span;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Program {
    pub instructions: Vec<Instr>,
}

impl Program {
    pub fn new(instructions: Vec<Instr>) -> Self {
        Program { instructions }
    }

    /// Visits every instruction, depth first, in source order.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Instr)) {
        walk_list(&self.instructions, f);
    }
}

fn walk_list<'a>(list: &'a [Instr], f: &mut impl FnMut(&'a Instr)) {
    for instr in list {
        f(instr);
        for child in instr.kind.child_lists() {
            walk_list(child, f);
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Instr {
    pub kind: InstrKind,
    #[serde(default)]
    pub span: Span,
}

impl PartialEq for Instr {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl Eq for Instr {}

impl Instr {
    pub fn new(kind: InstrKind) -> Self {
        Instr {
            kind,
            span: Span::default(),
        }
    }

    pub fn spanned(kind: InstrKind, span: Span) -> Self {
        Instr { kind, span }
    }
}

impl From<InstrKind> for Instr {
    fn from(kind: InstrKind) -> Self {
        Instr::new(kind)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum InstrKind {
    Action(Call),
    /// `° target.fn(arg) °`
    ActionInterrupt(Call),
    Repeat {
        count: u32,
        body: Vec<Instr>,
    },
    While {
        cond: Cond,
        body: Vec<Instr>,
    },
    Conditional {
        cond: Cond,
        then_body: Vec<Instr>,
        else_body: Option<Vec<Instr>>,
    },
    EventWait {
        cond: Cond,
        body: Vec<Instr>,
    },
    Parallel(Vec<Vec<Instr>>),
    /// Duration in virtual ticks.
    Timer(u32),
    Break,
    MacroCall(String),
}

impl InstrKind {
    /// Nested instruction lists, in source order.
    pub fn child_lists(&self) -> Vec<&Vec<Instr>> {
        match self {
            InstrKind::Repeat { body, .. }
            | InstrKind::While { body, .. }
            | InstrKind::EventWait { body, .. } => vec![body],
            InstrKind::Conditional {
                then_body,
                else_body,
                ..
            } => {
                let mut v = vec![then_body];
                v.extend(else_body.iter());
                v
            }
            InstrKind::Parallel(branches) => branches.iter().collect(),
            _ => Vec::new(),
        }
    }

    pub fn child_lists_mut(&mut self) -> Vec<&mut Vec<Instr>> {
        match self {
            InstrKind::Repeat { body, .. }
            | InstrKind::While { body, .. }
            | InstrKind::EventWait { body, .. } => vec![body],
            InstrKind::Conditional {
                then_body,
                else_body,
                ..
            } => {
                let mut v = vec![then_body];
                v.extend(else_body.iter_mut());
                v
            }
            InstrKind::Parallel(branches) => branches.iter_mut().collect(),
            _ => Vec::new(),
        }
    }
}

/// What a call resolves to once checked against the registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CallKind {
    Procedure,
    Integer,
    Boolean,
}

impl std::fmt::Display for CallKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CallKind::Procedure => "procedure",
            CallKind::Integer => "integer",
            CallKind::Boolean => "boolean",
        })
    }
}

/// `target.function(args)`.
///
/// The grammar allows an argument list but every call site takes at most one
/// argument; extra arguments are parsed and rejected by validation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Call {
    pub target: String,
    pub function: String,
    pub args: Vec<Variable>,
    /// `None` until validation resolves it.
    #[serde(default)]
    pub kind: Option<CallKind>,
    #[serde(default)]
    pub span: Span,
}

impl Call {
    pub fn new(target: impl Into<String>, function: impl Into<String>) -> Self {
        Call {
            target: target.into(),
            function: function.into(),
            args: Vec::new(),
            kind: None,
            span: Span::default(),
        }
    }

    pub fn with_arg(mut self, arg: Variable) -> Self {
        self.args.push(arg);
        self
    }

    pub fn arg(&self) -> Option<&Variable> {
        self.args.first()
    }
}

impl PartialEq for Call {
    fn eq(&self, other: &Self) -> bool {
        self.target == other.target && self.function == other.function && self.args == other.args
    }
}

impl Eq for Call {}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variable {
    Number(u32),
    /// A bare call in argument position. Validation decides whether it reads
    /// an integer reading or acts as a boolean condition.
    IntegerCall(Call),
    /// Any composite condition (`!`, grouping, `&`, `|`).
    CondArg(Cond),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cond {
    Atom(Call),
    Not(Box<Cond>),
    Group(Box<Cond>),
    And(Box<Cond>, Box<Cond>),
    Or(Box<Cond>, Box<Cond>),
}

impl Cond {
    pub fn atom(call: Call) -> Self {
        Cond::Atom(call)
    }

    pub fn negate(inner: Cond) -> Self {
        Cond::Not(Box::new(inner))
    }

    pub fn group(inner: Cond) -> Self {
        Cond::Group(Box::new(inner))
    }

    pub fn and(left: Cond, right: Cond) -> Self {
        Cond::And(Box::new(left), Box::new(right))
    }

    pub fn or(left: Cond, right: Cond) -> Self {
        Cond::Or(Box::new(left), Box::new(right))
    }

    /// Every call appearing in the condition, including those in arguments.
    pub fn calls(&self) -> Vec<&Call> {
        let mut out = Vec::new();
        self.collect_calls(&mut out);
        out
    }

    fn collect_calls<'a>(&'a self, out: &mut Vec<&'a Call>) {
        match self {
            Cond::Atom(c) => out.push(c),
            Cond::Not(c) | Cond::Group(c) => c.collect_calls(out),
            Cond::And(l, r) | Cond::Or(l, r) => {
                l.collect_calls(out);
                r.collect_calls(out);
            }
        }
    }
}
