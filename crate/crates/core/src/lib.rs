//! ScenL: a symbol-structured language for event-driven scenarios.
//!
//! Sensors publish raw events, rules derive symbolic ones, and a scenario
//! decides which entity functions to call in response. This crate holds the
//! language front end ([`lang`]), the event model ([`event`]), the
//! deterministic interpreter ([`interp`]) and a headless simulation harness
//! ([`sim`]).

pub mod event;
pub mod interp;
pub mod lang;
pub mod samples;
pub mod sim;

pub use event::{EnvState, Event, Likelihood, Registry, SymbolicRule, Value};
pub use interp::{ActionCommand, Input, Machine, MachineConfig, Output, TraceRecord};
pub use lang::{format, parse, validate, Diagnostic, Program};
pub use sim::{diff_traces, run_simulation, RunReport, SensorScript};
