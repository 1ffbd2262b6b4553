//! Generators for canonical ScenL trees: shapes the parser produces when
//! reading the formatter's output, so `parse(format(p)) == p` is expected to
//! hold exactly.

use proptest::prelude::*;
use scenl::lang::{Call, Cond, Instr, InstrKind, Program, Variable};

fn ident() -> impl Strategy<Value = String> {
    "[a-z][a-zA-Z0-9_]{0,6}"
}

fn leaf_call() -> impl Strategy<Value = Call> {
    (ident(), ident(), prop::option::of(0u32..1000)).prop_map(|(t, f, n)| {
        let c = Call::new(t, f);
        match n {
            Some(n) => c.with_arg(Variable::Number(n)),
            None => c,
        }
    })
}

/// Conditions in the shape the parser produces for their own formatting.
fn cond() -> impl Strategy<Value = Cond> {
    let leaf = leaf_call().prop_map(Cond::Atom);
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(Cond::negate),
            inner.clone().prop_map(|c| Cond::group(Cond::and(and_left(c.clone()), and_right(c)))),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Cond::and(and_left(l), and_right(r))),
            (inner.clone(), inner).prop_map(|(l, r)| Cond::or(l, or_right(r))),
        ]
    })
}

fn and_left(c: Cond) -> Cond {
    match c {
        Cond::Or(..) => Cond::group(c),
        c => c,
    }
}

fn and_right(c: Cond) -> Cond {
    match c {
        Cond::Or(..) | Cond::And(..) => Cond::group(c),
        c => c,
    }
}

fn or_right(c: Cond) -> Cond {
    match c {
        Cond::Or(..) => Cond::group(c),
        c => c,
    }
}

fn call() -> impl Strategy<Value = Call> {
    let arg = prop_oneof![
        (0u32..100_000).prop_map(Variable::Number),
        leaf_call().prop_map(Variable::IntegerCall),
        cond().prop_filter_map("atoms print as bare calls", |c| match c {
            Cond::Atom(_) => None,
            c => Some(Variable::CondArg(c)),
        }),
    ];
    (ident(), ident(), prop::option::of(arg)).prop_map(|(t, f, arg)| {
        let c = Call::new(t, f);
        match arg {
            Some(v) => c.with_arg(v),
            None => c,
        }
    })
}

fn block(instr: impl Strategy<Value = Instr>) -> impl Strategy<Value = Vec<Instr>> {
    prop::collection::vec(instr, 1..4)
}

fn instr() -> impl Strategy<Value = Instr> {
    let leaf = prop_oneof![
        4 => call().prop_map(|c| InstrKind::Action(c).into()),
        1 => call().prop_map(|c| InstrKind::ActionInterrupt(c).into()),
        1 => (0u32..1000).prop_map(|n| InstrKind::Timer(n).into()),
        1 => Just(InstrKind::Break.into()),
        1 => ident().prop_map(|m| InstrKind::MacroCall(m).into()),
    ];
    leaf.prop_recursive(6, 64, 4, |inner| {
        prop_oneof![
            (0u32..100, block(inner.clone()))
                .prop_map(|(count, body)| InstrKind::Repeat { count, body }.into()),
            (cond(), block(inner.clone())).prop_map(|(cond, body)| InstrKind::While { cond, body }.into()),
            (cond(), block(inner.clone()), prop::option::of(block(inner.clone()))).prop_map(
                |(cond, then_body, else_body)| InstrKind::Conditional {
                    cond,
                    then_body,
                    else_body
                }
                .into()
            ),
            (cond(), block(inner.clone())).prop_map(|(cond, body)| InstrKind::EventWait { cond, body }.into()),
            prop::collection::vec(block(inner), 2..4).prop_map(|arms| InstrKind::Parallel(arms).into()),
        ]
    })
}

pub fn program() -> impl Strategy<Value = Program> {
    prop::collection::vec(instr(), 1..5).prop_map(Program::new)
}
