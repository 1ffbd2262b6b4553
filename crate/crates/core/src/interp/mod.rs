//! The interpretation manager: runs a validated program against incoming
//! events and a virtual clock, emitting commands for entities.
//!
//! Execution rules, in short:
//!
//! - actions emit a command and continue; `°…°` actions also register an
//!   interrupt handle that is cancelled when the branch ends
//! - `n*(…)` runs its body `n` times; `*[c](…)` checks `c` before each pass
//! - `[c](…)!(…)` checks `c` once
//! - `<c>(…)` blocks until an event delivery finds `c` true, runs the body
//!   once and moves on; it does not re-arm unless a loop re-enters it
//! - `/(…, …)` forks one child branch per arm and joins on all of them
//! - `WAIT(n)` blocks for `n` ticks
//! - `BREAK` leaves the innermost loop of its branch, or ends the branch

mod cond;
mod machine;
mod trace;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cond::{evaluate_cond, read_variable, UnknownChannel};
pub use machine::{
    BranchInfo, HandleState, Input, InterruptHandle, Machine, MachineConfig, MachineStatus,
};
pub use trace::{parse_trace, TraceParseError, TraceRecord};

use crate::event::{EventCheckError, RuleError, Value};
use crate::lang::{Diagnostic, MacroError, Span};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionCommand {
    /// Unique per machine, in emission order.
    pub id: u64,
    pub entity: String,
    pub function: String,
    pub arg: Option<Value>,
    pub issued_at: u64,
    pub branch: u64,
    pub interruptible: bool,
}

/// An interruptible action was cancelled because its branch ended.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CancelNotice {
    pub command: u64,
    pub entity: String,
    pub function: String,
    pub branch: u64,
    pub at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Output {
    Action(ActionCommand),
    Cancel(CancelNotice),
}

impl Output {
    pub fn entity(&self) -> &str {
        match self {
            Output::Action(c) => &c.entity,
            Output::Cancel(c) => &c.entity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LoadError {
    #[error("program failed validation ({} diagnostics)", .0.len())]
    Invalid(Vec<Diagnostic>),
    #[error(transparent)]
    Macro(#[from] MacroError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InterpError {
    #[error("invalid event: {0}")]
    InvalidEvent(#[from] EventCheckError),
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error("branch {branch}: {reason}")]
    Runtime {
        branch: u64,
        span: Span,
        reason: String,
    },
    #[error("step budget of {budget} scheduling points exceeded")]
    StepBudgetExceeded { budget: u64 },
}
