//! Named, reusable scenario fragments.
//!
//! A macro library file holds one macro per section:
//!
//! ```text
//! macro greetAll:
//!   /(bioloid.sayHello();, greta.sayHello(););
//! ```

use std::collections::BTreeMap;

use thiserror::Error;

use super::ast::{Instr, InstrKind, Program};
use super::diag::Span;
use super::{parse, SyntaxError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MacroError {
    #[error("macro expansion cycle: {}", .0.join(" -> "))]
    MacroCycle(Vec<String>),
    #[error("unknown macro `@{0}`")]
    UnknownMacro(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LibraryError {
    #[error("line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error("macro `{name}`: {source}")]
    Syntax {
        name: String,
        #[source]
        source: SyntaxError,
    },
}

/// Inlines every macro call. The result contains no [`InstrKind::MacroCall`];
/// inlined instructions take the span of the call site.
pub fn expand_macros(
    program: &Program,
    macros: &BTreeMap<String, Program>,
) -> Result<Program, MacroError> {
    let mut stack = Vec::new();
    Ok(Program {
        instructions: expand_list(&program.instructions, macros, &mut stack)?,
    })
}

fn expand_list(
    list: &[Instr],
    macros: &BTreeMap<String, Program>,
    stack: &mut Vec<String>,
) -> Result<Vec<Instr>, MacroError> {
    let mut out = Vec::with_capacity(list.len());
    for instr in list {
        if let InstrKind::MacroCall(name) = &instr.kind {
            if let Some(pos) = stack.iter().position(|n| n == name) {
                let mut chain = stack[pos..].to_vec();
                chain.push(name.clone());
                return Err(MacroError::MacroCycle(chain));
            }
            let body = macros
                .get(name)
                .ok_or_else(|| MacroError::UnknownMacro(name.clone()))?;
            stack.push(name.clone());
            let expanded = expand_list(&body.instructions, macros, stack)?;
            stack.pop();
            out.extend(expanded.into_iter().map(|mut i| {
                respan(&mut i, instr.span);
                i
            }));
            continue;
        }
        let mut copy = instr.clone();
        for child in copy.kind.child_lists_mut() {
            *child = expand_list(child, macros, stack)?;
        }
        out.push(copy);
    }
    Ok(out)
}

fn respan(instr: &mut Instr, span: Span) {
    instr.span = span;
    for child in instr.kind.child_lists_mut() {
        for i in child {
            respan(i, span);
        }
    }
}

/// Returns the cycle reachable from macro `name`, if any.
pub(crate) fn check_acyclic(
    name: &str,
    macros: &BTreeMap<String, Program>,
) -> Result<(), Vec<String>> {
    fn visit(
        name: &str,
        macros: &BTreeMap<String, Program>,
        stack: &mut Vec<String>,
    ) -> Result<(), Vec<String>> {
        if let Some(pos) = stack.iter().position(|n| n == name) {
            let mut chain = stack[pos..].to_vec();
            chain.push(name.to_string());
            return Err(chain);
        }
        let Some(body) = macros.get(name) else {
            return Ok(());
        };
        stack.push(name.to_string());
        let mut calls = Vec::new();
        body.walk(&mut |i| {
            if let InstrKind::MacroCall(n) = &i.kind {
                calls.push(n.clone());
            }
        });
        for c in calls {
            visit(&c, macros, stack)?;
        }
        stack.pop();
        Ok(())
    }
    visit(name, macros, &mut Vec::new())
}

/// Parses a macro library: `macro <name>:` headers, each followed by
/// indented ScenL text. Blank lines and `#` comment lines between sections
/// are ignored.
pub fn parse_macro_library(text: &str) -> Result<BTreeMap<String, Program>, LibraryError> {
    let mut sections: Vec<(String, usize, String)> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let trimmed = line.trim();
        if let Some(rest) = line.strip_prefix("macro ") {
            let name = rest
                .trim()
                .strip_suffix(':')
                .map(str::trim)
                .filter(|n| crate::event::is_identifier(n))
                .ok_or_else(|| LibraryError::Format {
                    line: lineno,
                    reason: "expected `macro <name>:`".into(),
                })?;
            if sections.iter().any(|(n, _, _)| n == name) {
                return Err(LibraryError::Format {
                    line: lineno,
                    reason: format!("duplicate macro `{name}`"),
                });
            }
            sections.push((name.to_string(), lineno, String::new()));
        } else if line.starts_with([' ', '\t']) && !trimmed.is_empty() {
            let Some((_, _, body)) = sections.last_mut() else {
                return Err(LibraryError::Format {
                    line: lineno,
                    reason: "indented text before any `macro` header".into(),
                });
            };
            body.push_str(line);
            body.push('\n');
        } else if !trimmed.is_empty() && !trimmed.starts_with('#') {
            return Err(LibraryError::Format {
                line: lineno,
                reason: "macro bodies must be indented".into(),
            });
        }
    }

    let mut out = BTreeMap::new();
    for (name, line, body) in sections {
        if body.trim().is_empty() {
            return Err(LibraryError::Format {
                line,
                reason: format!("macro `{name}` is empty"),
            });
        }
        let program = parse(&body).map_err(|source| LibraryError::Syntax {
            name: name.clone(),
            source,
        })?;
        out.insert(name, program);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{format, Call};

    fn lib(entries: &[(&str, &str)]) -> BTreeMap<String, Program> {
        entries
            .iter()
            .map(|(n, s)| (n.to_string(), parse(s).unwrap()))
            .collect()
    }

    #[test]
    fn no_macros_is_identity() {
        let p = parse("3*(a.b(););[s.x()](a.c(););").unwrap();
        assert_eq!(expand_macros(&p, &BTreeMap::new()).unwrap(), p);
    }

    #[test]
    fn single_substitution() {
        let p = parse("@greet;").unwrap();
        let out = expand_macros(&p, &lib(&[("greet", "a.hi();")])).unwrap();
        assert_eq!(
            out,
            Program::new(vec![InstrKind::Action(Call::new("a", "hi")).into()])
        );
    }

    #[test]
    fn nested_and_in_place() {
        let macros = lib(&[("two", "a.x(); @one;"), ("one", "a.y();")]);
        let p = parse("2*(@two;);a.z();").unwrap();
        let out = expand_macros(&p, &macros).unwrap();
        assert_eq!(out, parse("2*(a.x(); a.y();); a.z();").unwrap());
        // inlined instructions point at the call site
        assert_eq!(out.instructions[0].kind.child_lists()[0][1].span, p.instructions[0].kind.child_lists()[0][0].span);
    }

    #[test]
    fn cycles_and_unknowns() {
        let macros = lib(&[("me", "@me;")]);
        assert_eq!(
            expand_macros(&parse("@me;").unwrap(), &macros),
            Err(MacroError::MacroCycle(vec!["me".into(), "me".into()]))
        );
        let macros = lib(&[("a", "@b;"), ("b", "x.y(); @a;")]);
        assert_eq!(
            expand_macros(&parse("@a;").unwrap(), &macros),
            Err(MacroError::MacroCycle(vec!["a".into(), "b".into(), "a".into()]))
        );
        assert_eq!(
            expand_macros(&parse("@zz;").unwrap(), &macros),
            Err(MacroError::UnknownMacro("zz".into()))
        );
        assert_eq!(check_acyclic("a", &macros), Err(vec!["a".into(), "b".into(), "a".into()]));
    }

    #[test]
    fn idempotent() {
        let macros = lib(&[("two", "a.x(); @one;"), ("one", "a.y();")]);
        let once = expand_macros(&parse("@two;/(@one;, @two;);").unwrap(), &macros).unwrap();
        assert_eq!(expand_macros(&once, &macros).unwrap(), once);
    }

    #[test]
    fn library_file() {
        let text = "# shared fragments\nmacro greetAll:\n  /(\n    bioloid.sayHello();\n  ,\n    greta.sayHello();\n  );\n\nmacro nap:\n  WAIT(10);\n";
        let lib = parse_macro_library(text).unwrap();
        assert_eq!(lib.len(), 2);
        assert_eq!(format(&lib["nap"]), "WAIT(10);");
        assert!(parse_macro_library("macro x:\nWAIT(1);").is_err());
        assert!(parse_macro_library("macro x:\n  WAIT(1\n").is_err());
        assert!(parse_macro_library("macro x:\n  a.b();\nmacro x:\n  a.b();").is_err());
        assert!(parse_macro_library("macro x:\n").is_err());
    }
}
