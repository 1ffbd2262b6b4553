//! Headless, deterministic runs: a scripted sensor timeline drives a
//! [`Machine`] over a fixed horizon, commands land in mock entities, and the
//! whole exchange is captured as a trace.

mod script;

use std::collections::BTreeMap;
use std::fmt::Write;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

pub use script::{ScriptError, SensorScript};

use crate::event::{Registry, RegistryError, SymbolicRule};
use crate::interp::{InterpError, Input, LoadError, Machine, MachineConfig, Output, TraceRecord};
use crate::lang::Program;

/// Records everything delivered to one entity, in delivery order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct MockEntity {
    pub entity: String,
    pub received: Vec<Output>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunReport {
    pub trace: Vec<TraceRecord>,
    pub final_clock: u64,
    /// No branch could make progress when the run stopped.
    pub quiescent: bool,
    /// Every branch ran to completion.
    pub finished: bool,
    pub budget_exhausted: bool,
    pub entities: BTreeMap<String, MockEntity>,
}

impl RunReport {
    pub fn outputs(&self) -> impl Iterator<Item = &TraceRecord> {
        self.trace.iter().filter(|r| r.is_out())
    }

    pub fn summary(&self) -> String {
        let count = |p: fn(&TraceRecord) -> bool| self.trace.iter().filter(|r| p(r)).count();
        format!(
            "final_clock={} quiescent={} finished={} budget_exhausted={} in={} out={} cancel={}",
            self.final_clock,
            self.quiescent,
            self.finished,
            self.budget_exhausted,
            count(|r| matches!(r, TraceRecord::In { .. })),
            count(|r| matches!(r, TraceRecord::Out { .. })),
            count(|r| matches!(r, TraceRecord::Cancel { .. })),
        )
    }

    /// The trace, one record per line, followed by a `# summary` footer.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for r in &self.trace {
            let _ = writeln!(out, "{r}");
        }
        let _ = writeln!(out, "# summary {}", self.summary());
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error(transparent)]
    Script(#[from] ScriptError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error(transparent)]
    Runtime(InterpError),
}

pub fn run_simulation(
    program: &Program,
    registry: &Registry,
    rules: &[SymbolicRule],
    script: &SensorScript,
    horizon: u64,
) -> Result<RunReport, SimError> {
    run_simulation_with(program, registry, rules, script, horizon, MachineConfig::default())
}

/// Runs `program` from tick 0 to `horizon`.
///
/// Events scheduled at tick `t` are delivered in script order while the clock
/// reads `t`, each as its own step; the clock then advances. `rules` are added
/// to those already in `registry`.
pub fn run_simulation_with(
    program: &Program,
    registry: &Registry,
    rules: &[SymbolicRule],
    script: &SensorScript,
    horizon: u64,
    config: MachineConfig,
) -> Result<RunReport, SimError> {
    let mut registry = registry.clone();
    registry.add_rules(rules.to_vec())?;
    script.check(&registry)?;

    let mut machine = Machine::load(program, Arc::new(registry), config)?;
    let mut run = Run::default();

    let mut pending = script.entries().iter().peekable();
    let mut result = run.record(machine.run_to_quiescence());
    if result.is_ok() {
        for tick in 0..=horizon {
            while let Some((_, event)) = pending.next_if(|(t, _)| *t == tick) {
                run.trace.push(TraceRecord::input(machine.clock(), event));
                result = run.record(machine.step(Input::Event(event.clone())));
                if result.is_err() {
                    break;
                }
            }
            if result.is_err() || tick == horizon {
                break;
            }
            result = run.record(machine.step(Input::Tick));
            if result.is_err() {
                break;
            }
        }
    }

    let budget_exhausted = match result {
        Ok(()) => false,
        Err(InterpError::StepBudgetExceeded { .. }) => {
            run.absorb(machine.drain());
            true
        }
        Err(other) => return Err(SimError::Runtime(other)),
    };

    Ok(RunReport {
        trace: run.trace,
        final_clock: machine.clock(),
        quiescent: !budget_exhausted,
        finished: machine.is_finished(),
        budget_exhausted,
        entities: run.entities,
    })
}

#[derive(Default)]
struct Run {
    trace: Vec<TraceRecord>,
    entities: BTreeMap<String, MockEntity>,
}

impl Run {
    fn record(&mut self, step: Result<Vec<Output>, InterpError>) -> Result<(), InterpError> {
        self.absorb(step?);
        Ok(())
    }

    fn absorb(&mut self, outputs: Vec<Output>) {
        for out in outputs {
            self.trace.push(TraceRecord::output(&out));
            let name = out.entity().to_string();
            self.entities
                .entry(name.clone())
                .or_insert_with(|| MockEntity {
                    entity: name,
                    received: Vec::new(),
                })
                .received
                .push(out);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Side {
    Left,
    Right,
}

/// One side of the first point where two traces disagree. `line` is 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Divergence {
    pub side: Side,
    pub line: usize,
    pub record: TraceRecord,
}

/// Empty when the traces are identical; otherwise the first differing record
/// from each side (a side that simply ended early contributes nothing).
pub fn diff_traces(a: &[TraceRecord], b: &[TraceRecord]) -> Vec<Divergence> {
    let n = a.len().max(b.len());
    for i in 0..n {
        let (l, r) = (a.get(i), b.get(i));
        if l != r {
            let mut out = Vec::new();
            if let Some(rec) = l {
                out.push(Divergence {
                    side: Side::Left,
                    line: i + 1,
                    record: rec.clone(),
                });
            }
            if let Some(rec) = r {
                out.push(Divergence {
                    side: Side::Right,
                    line: i + 1,
                    record: rec.clone(),
                });
            }
            return out;
        }
    }
    Vec::new()
}
