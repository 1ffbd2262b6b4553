//! Raw and symbolic events, environment state and the descriptor files that
//! declare what sensors emit and what entities can do.

mod descriptor;
mod registry;
mod rules;
mod state;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use descriptor::{
    parse_descriptor, parse_descriptors, Descriptor, DescriptorError, DescriptorKind, EntityDescriptor,
    FunctionDecl, SensorDescriptor, ValueType,
};
/// Whether `s` is a valid ScenL identifier: an ASCII letter followed by
/// letters, digits or `_`.
pub use descriptor::is_ident as is_identifier;
pub use registry::{EventCheckError, Registry, RegistryError, SYMBOLIC_SENSOR};
pub use rules::{
    apply_rules, parse_rules, retracted_events, Comparator, RuleError, SymbolicRule,
};
pub use state::{Channel, EnvState, Reading, StaleEvent};

/// An event value: integers and text only.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Text(String),
}

impl Value {
    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(n) => Some(*n),
            Value::Text(_) => None,
        }
    }

    /// Integers when the whole string is one, text otherwise.
    pub fn parse_lenient(s: &str) -> Value {
        s.parse::<i64>()
            .map(Value::Int)
            .unwrap_or_else(|_| Value::Text(s.to_string()))
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(n) => write!(f, "{n}"),
            Value::Text(s) => f.write_str(s),
        }
    }
}

impl From<i64> for Value {
    fn from(n: i64) -> Self {
        Value::Int(n)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Text(s.to_string())
    }
}

/// Certainty of a sensor about an event, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Likelihood(u8);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("likelihood {0} outside 0..=100")]
pub struct LikelihoodError(pub i64);

impl Likelihood {
    pub const CERTAIN: Likelihood = Likelihood(100);

    pub const fn new(percent: u8) -> Result<Self, LikelihoodError> {
        if percent <= 100 {
            Ok(Likelihood(percent))
        } else {
            Err(LikelihoodError(percent as i64))
        }
    }

    pub fn percent(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for Likelihood {
    type Error = LikelihoodError;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Likelihood::new(v)
    }
}

impl From<Likelihood> for u8 {
    fn from(l: Likelihood) -> u8 {
        l.0
    }
}

impl FromStr for Likelihood {
    type Err = LikelihoodError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let n: i64 = s.trim().parse().map_err(|_| LikelihoodError(-1))?;
        u8::try_from(n)
            .map_err(|_| LikelihoodError(n))
            .and_then(Likelihood::new)
    }
}

impl fmt::Display for Likelihood {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The (sensor, name, value, likelihood) quadruple, plus the ingestion index
/// assigned when it enters an [`EnvState`]. A `seq` of 0 means "not yet
/// ingested".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub sensor: String,
    pub name: String,
    pub value: Value,
    pub likelihood: Likelihood,
    #[serde(default)]
    pub seq: u64,
}

impl Event {
    pub fn new(
        sensor: impl Into<String>,
        name: impl Into<String>,
        value: impl Into<Value>,
        likelihood: Likelihood,
    ) -> Self {
        Event {
            sensor: sensor.into(),
            name: name.into(),
            value: value.into(),
            likelihood,
            seq: 0,
        }
    }

    /// Builds an event from its four-string wire form, e.g.
    /// `["thermometer", "temperature", "24", "100"]`.
    pub fn from_quad(fields: [&str; 4]) -> Result<Self, LikelihoodError> {
        let [sensor, name, value, likelihood] = fields;
        Ok(Event::new(
            sensor,
            name,
            Value::parse_lenient(value),
            likelihood.parse()?,
        ))
    }

    pub fn channel(&self) -> Channel {
        (self.sensor.clone(), self.name.clone())
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}.{}={}@{}",
            self.sensor, self.name, self.value, self.likelihood
        )
    }
}
