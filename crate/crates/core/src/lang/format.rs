//! Canonical pretty printer.
//!
//! One instruction per line, two spaces of indentation per nesting level,
//! a single space around `&` and `|`. Parallel branches are indented one
//! level and separated by a `,` line at the level of the `/(`.

use std::fmt::Write;

use super::ast::{Call, Cond, Instr, InstrKind, Program, Variable};

const INDENT: &str = "  ";

/// Renders `program` in canonical form, without a trailing newline.
pub fn format(program: &Program) -> String {
    let mut out = String::new();
    write_list(&mut out, &program.instructions, 0);
    if out.ends_with('\n') {
        out.pop();
    }
    out
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str(INDENT);
    }
}

fn write_list(out: &mut String, list: &[Instr], depth: usize) {
    for instr in list {
        write_instr(out, instr, depth);
    }
}

fn write_block(out: &mut String, body: &[Instr], depth: usize) {
    out.push_str("(\n");
    write_list(out, body, depth + 1);
    indent(out, depth);
    out.push(')');
}

fn write_instr(out: &mut String, instr: &Instr, depth: usize) {
    indent(out, depth);
    match &instr.kind {
        InstrKind::Action(call) => write_call(out, call),
        InstrKind::ActionInterrupt(call) => {
            out.push('°');
            write_call(out, call);
            out.push('°');
        }
        InstrKind::Repeat { count, body } => {
            let _ = write!(out, "{count}*");
            write_block(out, body, depth);
        }
        InstrKind::While { cond, body } => {
            out.push_str("*[");
            write_cond(out, cond);
            out.push(']');
            write_block(out, body, depth);
        }
        InstrKind::Conditional {
            cond,
            then_body,
            else_body,
        } => {
            out.push('[');
            write_cond(out, cond);
            out.push(']');
            write_block(out, then_body, depth);
            if let Some(else_body) = else_body {
                out.push('!');
                write_block(out, else_body, depth);
            }
        }
        InstrKind::EventWait { cond, body } => {
            out.push('<');
            write_cond(out, cond);
            out.push('>');
            write_block(out, body, depth);
        }
        InstrKind::Parallel(branches) => {
            out.push_str("/(\n");
            for (i, branch) in branches.iter().enumerate() {
                if i > 0 {
                    indent(out, depth);
                    out.push_str(",\n");
                }
                write_list(out, branch, depth + 1);
            }
            indent(out, depth);
            out.push(')');
        }
        InstrKind::Timer(n) => {
            let _ = write!(out, "WAIT({n})");
        }
        InstrKind::Break => out.push_str("BREAK"),
        InstrKind::MacroCall(name) => {
            out.push('@');
            out.push_str(name);
        }
    }
    out.push_str(";\n");
}

fn write_call(out: &mut String, call: &Call) {
    out.push_str(&call.target);
    out.push('.');
    out.push_str(&call.function);
    out.push('(');
    for (i, arg) in call.args.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        match arg {
            Variable::Number(n) => {
                let _ = write!(out, "{n}");
            }
            Variable::IntegerCall(c) => write_call(out, c),
            Variable::CondArg(c) => write_cond(out, c),
        }
    }
    out.push(')');
}

/// Binding strength, higher binds tighter.
fn level(cond: &Cond) -> u8 {
    match cond {
        Cond::Or(..) => 0,
        Cond::And(..) => 1,
        _ => 2,
    }
}

/// Writes `cond`, adding parentheses only where a hand-built tree would
/// otherwise re-parse with a different shape. Parsed trees never need them.
fn write_operand(out: &mut String, cond: &Cond, min_level: u8) {
    if level(cond) < min_level {
        out.push('(');
        write_cond(out, cond);
        out.push(')');
    } else {
        write_cond(out, cond);
    }
}

fn write_cond(out: &mut String, cond: &Cond) {
    match cond {
        Cond::Atom(call) => write_call(out, call),
        Cond::Not(inner) => {
            out.push_str("!(");
            write_cond(out, inner);
            out.push(')');
        }
        Cond::Group(inner) => {
            out.push('(');
            write_cond(out, inner);
            out.push(')');
        }
        Cond::And(l, r) => {
            write_operand(out, l, 1);
            out.push_str(" & ");
            write_operand(out, r, 2);
        }
        Cond::Or(l, r) => {
            write_operand(out, l, 0);
            out.push_str(" | ");
            write_operand(out, r, 1);
        }
    }
}
