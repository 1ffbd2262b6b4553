//! Line-oriented trace records.
//!
//! ```text
//! T=3 IN env.humanHere=1@100
//! T=3 OUT bioloid.sayHello() br=1
//! T=7 CANCEL nabaztag.earsUp br=2
//! T=7 DELIVERY_FAIL greta.sayHello br=1 reason=connection refused
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ActionCommand, Output};
use crate::event::{Event, Likelihood, Value};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum TraceRecord {
    #[serde(rename = "IN")]
    In {
        tick: u64,
        sensor: String,
        name: String,
        value: Value,
        likelihood: Likelihood,
    },
    #[serde(rename = "OUT")]
    Out {
        tick: u64,
        entity: String,
        function: String,
        arg: Option<Value>,
        branch: u64,
    },
    #[serde(rename = "CANCEL")]
    Cancel {
        tick: u64,
        entity: String,
        function: String,
        branch: u64,
    },
    #[serde(rename = "DELIVERY_FAIL")]
    DeliveryFail {
        tick: u64,
        entity: String,
        function: String,
        branch: u64,
        reason: String,
    },
}

impl TraceRecord {
    pub fn input(tick: u64, event: &Event) -> Self {
        TraceRecord::In {
            tick,
            sensor: event.sensor.clone(),
            name: event.name.clone(),
            value: event.value.clone(),
            likelihood: event.likelihood,
        }
    }

    pub fn command(cmd: &ActionCommand) -> Self {
        TraceRecord::Out {
            tick: cmd.issued_at,
            entity: cmd.entity.clone(),
            function: cmd.function.clone(),
            arg: cmd.arg.clone(),
            branch: cmd.branch,
        }
    }

    pub fn output(out: &Output) -> Self {
        match out {
            Output::Action(cmd) => TraceRecord::command(cmd),
            Output::Cancel(c) => TraceRecord::Cancel {
                tick: c.at,
                entity: c.entity.clone(),
                function: c.function.clone(),
                branch: c.branch,
            },
        }
    }

    pub fn tick(&self) -> u64 {
        match self {
            TraceRecord::In { tick, .. }
            | TraceRecord::Out { tick, .. }
            | TraceRecord::Cancel { tick, .. }
            | TraceRecord::DeliveryFail { tick, .. } => *tick,
        }
    }

    pub fn is_out(&self) -> bool {
        matches!(self, TraceRecord::Out { .. })
    }

    /// The event an IN record describes.
    pub fn as_event(&self) -> Option<Event> {
        match self {
            TraceRecord::In {
                sensor,
                name,
                value,
                likelihood,
                ..
            } => Some(Event::new(sensor.as_str(), name.as_str(), value.clone(), *likelihood)),
            _ => None,
        }
    }
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceRecord::In {
                tick,
                sensor,
                name,
                value,
                likelihood,
            } => write!(f, "T={tick} IN {sensor}.{name}={value}@{likelihood}"),
            TraceRecord::Out {
                tick,
                entity,
                function,
                arg,
                branch,
            } => {
                write!(f, "T={tick} OUT {entity}.{function}(")?;
                if let Some(arg) = arg {
                    write!(f, "{arg}")?;
                }
                write!(f, ") br={branch}")
            }
            TraceRecord::Cancel {
                tick,
                entity,
                function,
                branch,
            } => write!(f, "T={tick} CANCEL {entity}.{function} br={branch}"),
            TraceRecord::DeliveryFail {
                tick,
                entity,
                function,
                branch,
                reason,
            } => write!(
                f,
                "T={tick} DELIVERY_FAIL {entity}.{function} br={branch} reason={reason}"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed trace record `{0}`")]
pub struct TraceParseError(pub String);

fn split_dotted(s: &str) -> Option<(String, String)> {
    let (a, b) = s.split_once('.')?;
    Some((a.to_string(), b.to_string()))
}

fn parse_branch(s: &str) -> Option<u64> {
    s.strip_prefix("br=")?.parse().ok()
}

impl FromStr for TraceRecord {
    type Err = TraceParseError;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let bad = || TraceParseError(line.to_string());
        let rest = line.strip_prefix("T=").ok_or_else(bad)?;
        let (tick, rest) = rest.split_once(' ').ok_or_else(bad)?;
        let tick: u64 = tick.parse().map_err(|_| bad())?;
        let (tag, body) = rest.split_once(' ').ok_or_else(bad)?;
        match tag {
            "IN" => {
                let (channel, rest) = body.split_once('=').ok_or_else(bad)?;
                let (value, likelihood) = rest.rsplit_once('@').ok_or_else(bad)?;
                let (sensor, name) = split_dotted(channel).ok_or_else(bad)?;
                Ok(TraceRecord::In {
                    tick,
                    sensor,
                    name,
                    value: Value::parse_lenient(value),
                    likelihood: likelihood.parse().map_err(|_| bad())?,
                })
            }
            "OUT" => {
                let (call, branch) = body.rsplit_once(' ').ok_or_else(bad)?;
                let branch = parse_branch(branch).ok_or_else(bad)?;
                let (head, arg) = call.split_once('(').ok_or_else(bad)?;
                let arg = arg.strip_suffix(')').ok_or_else(bad)?;
                let (entity, function) = split_dotted(head).ok_or_else(bad)?;
                Ok(TraceRecord::Out {
                    tick,
                    entity,
                    function,
                    arg: (!arg.is_empty()).then(|| Value::parse_lenient(arg)),
                    branch,
                })
            }
            "CANCEL" => {
                let (head, branch) = body.split_once(' ').ok_or_else(bad)?;
                let (entity, function) = split_dotted(head).ok_or_else(bad)?;
                Ok(TraceRecord::Cancel {
                    tick,
                    entity,
                    function,
                    branch: parse_branch(branch).ok_or_else(bad)?,
                })
            }
            "DELIVERY_FAIL" => {
                let (head, rest) = body.split_once(' ').ok_or_else(bad)?;
                let (branch, reason) = rest.split_once(" reason=").ok_or_else(bad)?;
                let (entity, function) = split_dotted(head).ok_or_else(bad)?;
                Ok(TraceRecord::DeliveryFail {
                    tick,
                    entity,
                    function,
                    branch: parse_branch(branch).ok_or_else(bad)?,
                    reason: reason.to_string(),
                })
            }
            _ => Err(bad()),
        }
    }
}

/// Parses a trace file, skipping blank lines and `#` lines (summary footers).
pub fn parse_trace(text: &str) -> Result<Vec<TraceRecord>, TraceParseError> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::parse)
        .collect()
}
