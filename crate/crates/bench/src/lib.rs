//! Workload generators shared by the benchmarks.

use scenl::lang::{format, parse};
use scenl::{Program, Registry};

/// A registry with one sensor `s` (events `e0..e7`) and one entity `a`
/// (procedures `p0..p7`).
pub fn registry() -> Registry {
    let mut text = String::from("sensor s\n");
    for i in 0..8 {
        text.push_str(&format!("event e{i}: integer\n"));
    }
    text.push_str("entity a\n");
    for i in 0..8 {
        text.push_str(&format!("fn p{i}: procedure/0\n"));
    }
    Registry::from_sources([text.as_str()], []).expect("bench registry")
}

/// A canonical program with `sections` sections, each mixing loops,
/// conditionals, event waits and a parallel block.
pub fn large_program(sections: usize) -> String {
    let mut src = String::new();
    for i in 0..sections {
        let e = i % 8;
        let p = (i + 3) % 8;
        src.push_str(&format!(
            "2*([s.e{e}() & !(s.e{p}()) | s.e{e}(4)](a.p{p}();)!(a.p{e}(););a.p0(););\
             <s.e{e}()>(/(a.p1();, a.p2();WAIT(1);, a.p3(););a.p{p}(););"
        ));
    }
    format(&parse(&src).expect("generated program parses"))
}

/// `n*(a.p0();)`
pub fn counting_loop(n: u32) -> Program {
    parse(&format!("{n}*(a.p0(););")).expect("loop parses")
}
