//! Static checks of a program against a [`Registry`].
//!
//! Actions must target entity procedures. Conditions read sensor channels,
//! including the `symbolic` namespace fed by rules. A bare call in argument
//! position reads a sensor value, or acts as a boolean condition when the
//! event carries no value. Entities are never queried synchronously.

use std::collections::BTreeSet;

use super::ast::{Call, CallKind, Cond, Instr, InstrKind, Program, Variable};
use super::diag::{Diagnostic, Span};
use crate::event::{Registry, ValueType, SYMBOLIC_SENSOR};

pub fn validate(program: &Program, registry: &Registry) -> Vec<Diagnostic> {
    resolve(program.clone(), registry).1
}

/// Validates `program` and fills in every [`Call::kind`] that could be
/// resolved.
pub fn resolve(mut program: Program, registry: &Registry) -> (Program, Vec<Diagnostic>) {
    let mut v = Validator {
        registry,
        diags: Vec::new(),
    };
    v.list(&mut program.instructions, 0);
    v.macros(&program);
    (program, v.diags)
}

struct Validator<'r> {
    registry: &'r Registry,
    diags: Vec<Diagnostic>,
}

impl Validator<'_> {
    fn error(&mut self, code: &str, message: String, span: Span) {
        self.diags.push(Diagnostic::error(code, message, span));
    }

    fn warning(&mut self, code: &str, message: String, span: Span) {
        self.diags.push(Diagnostic::warning(code, message, span));
    }

    /// `loops` counts enclosing repeat/while frames within the current branch.
    fn list(&mut self, list: &mut [Instr], loops: usize) {
        let mut after_break = false;
        let mut warned = false;
        for instr in list.iter_mut() {
            if after_break && !warned {
                self.warning(
                    "unreachable",
                    "instruction after BREAK is never executed".into(),
                    instr.span,
                );
                warned = true;
            }
            if matches!(instr.kind, InstrKind::Break) {
                after_break = true;
            }
            self.instr(instr, loops);
        }
    }

    fn instr(&mut self, instr: &mut Instr, loops: usize) {
        let span = instr.span;
        match &mut instr.kind {
            InstrKind::Action(call) | InstrKind::ActionInterrupt(call) => self.action(call),
            InstrKind::Repeat { count, body } => {
                if *count == 0 {
                    self.warning("zero-repeat", "repeat count is 0; body never runs".into(), span);
                }
                self.list(body, loops + 1);
            }
            InstrKind::While { cond, body } => {
                self.cond(cond);
                self.list(body, loops + 1);
            }
            InstrKind::Conditional {
                cond,
                then_body,
                else_body,
            } => {
                self.cond(cond);
                self.list(then_body, loops);
                if let Some(e) = else_body {
                    self.list(e, loops);
                }
            }
            InstrKind::EventWait { cond, body } => {
                self.cond(cond);
                self.list(body, loops);
            }
            InstrKind::Parallel(branches) => {
                // each branch runs on its own, outside any enclosing loop
                for b in branches {
                    self.list(b, 0);
                }
            }
            InstrKind::Timer(_) => {}
            InstrKind::Break => {
                if loops == 0 {
                    self.warning(
                        "break-outside-loop",
                        "BREAK outside a loop ends the whole branch".into(),
                        span,
                    );
                }
            }
            InstrKind::MacroCall(_) => {}
        }
    }

    fn arity(&mut self, call: &Call, expected: usize) {
        if call.args.len() > 1 {
            self.error(
                "too-many-arguments",
                format!(
                    "`{}.{}` has {} arguments; calls take at most one",
                    call.target,
                    call.function,
                    call.args.len()
                ),
                call.span,
            );
        } else if call.args.len() != expected {
            self.error(
                "arity-mismatch",
                format!(
                    "`{}.{}` takes {expected} argument(s), got {}",
                    call.target,
                    call.function,
                    call.args.len()
                ),
                call.span,
            );
        }
    }

    fn action(&mut self, call: &mut Call) {
        if let Some(entity) = self.registry.entity(&call.target) {
            match entity.function(&call.function) {
                None => self.error(
                    "unknown-function",
                    format!("entity `{}` has no function `{}`", call.target, call.function),
                    call.span,
                ),
                Some(f) => {
                    call.kind = Some(f.kind);
                    if f.kind != CallKind::Procedure {
                        self.error(
                            "kind-mismatch",
                            format!(
                                "`{}.{}` is a {} function and cannot be used as an action",
                                call.target, call.function, f.kind
                            ),
                            call.span,
                        );
                    }
                    let arity = f.arity as usize;
                    self.arity(call, arity);
                }
            }
        } else if self.is_sensor(&call.target) {
            self.error(
                "kind-mismatch",
                format!(
                    "`{}` is a sensor; sensor events can only be used in conditions",
                    call.target
                ),
                call.span,
            );
        } else {
            self.error(
                "unknown-entity",
                format!("unknown entity `{}`", call.target),
                call.span,
            );
        }
        self.args(call);
    }

    fn is_sensor(&self, name: &str) -> bool {
        name == SYMBOLIC_SENSOR || self.registry.sensor(name).is_some()
    }

    /// Looks up a sensor channel, reporting unknown targets and events.
    fn channel(&mut self, call: &Call) -> Option<ValueType> {
        if call.target == SYMBOLIC_SENSOR {
            let ty = self.registry.symbolic_type(&call.function);
            if ty.is_none() {
                self.warning(
                    "unknown-symbolic-event",
                    format!("no rule emits `symbolic.{}`; it is never true", call.function),
                    call.span,
                );
            }
            return Some(ty.unwrap_or(ValueType::None));
        }
        if let Some(sensor) = self.registry.sensor(&call.target) {
            let ty = sensor.event(&call.function);
            if ty.is_none() {
                self.error(
                    "unknown-function",
                    format!("sensor `{}` has no event `{}`", call.target, call.function),
                    call.span,
                );
            }
            return ty;
        }
        if let Some(entity) = self.registry.entity(&call.target) {
            match entity.function(&call.function) {
                Some(f) if f.kind == CallKind::Procedure => self.error(
                    "kind-mismatch",
                    format!(
                        "`{}.{}` is a procedure and cannot be read as a value",
                        call.target, call.function
                    ),
                    call.span,
                ),
                Some(_) => self.error(
                    "entity-query",
                    format!(
                        "`{}.{}` queries an entity; only sensors can be read",
                        call.target, call.function
                    ),
                    call.span,
                ),
                None => self.error(
                    "unknown-function",
                    format!("entity `{}` has no function `{}`", call.target, call.function),
                    call.span,
                ),
            }
            return None;
        }
        self.error(
            "unknown-sensor",
            format!("unknown sensor `{}`", call.target),
            call.span,
        );
        None
    }

    fn cond(&mut self, cond: &mut Cond) {
        match cond {
            Cond::Atom(call) => {
                if let Some(ty) = self.channel(call) {
                    call.kind = Some(CallKind::Boolean);
                    // `s.e(v)` compares the reading, so the event needs a value
                    let max = if ty == ValueType::None { 0 } else { 1 };
                    if call.args.len() > 1 {
                        self.arity(call, max);
                    } else if call.args.len() > max {
                        self.error(
                            "arity-mismatch",
                            format!(
                                "`{}.{}` carries no value to compare against",
                                call.target, call.function
                            ),
                            call.span,
                        );
                    }
                }
                self.args(call);
            }
            Cond::Not(inner) | Cond::Group(inner) => self.cond(inner),
            Cond::And(l, r) | Cond::Or(l, r) => {
                self.cond(l);
                self.cond(r);
            }
        }
    }

    fn args(&mut self, call: &mut Call) {
        for arg in &mut call.args {
            match arg {
                Variable::Number(_) => {}
                Variable::IntegerCall(inner) => {
                    if let Some(ty) = self.channel(inner) {
                        inner.kind = Some(match ty {
                            ValueType::None => CallKind::Boolean,
                            _ => CallKind::Integer,
                        });
                        if !inner.args.is_empty() {
                            self.arity(inner, 0);
                        }
                    }
                    self.args(inner);
                }
                Variable::CondArg(c) => self.cond(c),
            }
        }
    }

    fn macros(&mut self, program: &Program) {
        let mut calls = Vec::new();
        program.walk(&mut |i| {
            if let InstrKind::MacroCall(name) = &i.kind {
                calls.push((name.clone(), i.span));
            }
        });
        let mut reported = BTreeSet::new();
        for (name, span) in calls {
            match self.registry.macros.get(&name) {
                None => self.error("unknown-macro", format!("unknown macro `@{name}`"), span),
                Some(_) => {
                    if let Err(chain) = super::macros::check_acyclic(&name, &self.registry.macros) {
                        if reported.insert(chain.clone()) {
                            self.error(
                                "macro-cycle",
                                format!("macro expansion cycle: {}", chain.join(" -> ")),
                                span,
                            );
                        }
                    }
                }
            }
        }
    }
}
