use std::fmt;

use thiserror::Error;

use crate::event::{Event, EventCheckError, Registry, Value};
use crate::interp::TraceRecord;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScriptError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("entry {index}: {source}")]
    Undeclared {
        index: usize,
        #[source]
        source: EventCheckError,
    },
    #[error("entry {index}: tick {tick} is before the previous entry")]
    OutOfOrder { index: usize, tick: u64 },
}

/// Time-sorted sensor events to feed a simulation.
///
/// ```text
/// @3 env.humanHere=1@100
/// @5 thermometer.temperature=14@90
/// ```
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SensorScript {
    entries: Vec<(u64, Event)>,
}

impl SensorScript {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a script, rejecting decreasing ticks.
    pub fn from_entries(entries: Vec<(u64, Event)>) -> Result<Self, ScriptError> {
        for (index, w) in entries.windows(2).enumerate() {
            if w[1].0 < w[0].0 {
                return Err(ScriptError::OutOfOrder {
                    index: index + 1,
                    tick: w[1].0,
                });
            }
        }
        Ok(SensorScript { entries })
    }

    pub fn push(&mut self, tick: u64, event: Event) -> Result<(), ScriptError> {
        if self.entries.last().is_some_and(|(t, _)| *t > tick) {
            return Err(ScriptError::OutOfOrder {
                index: self.entries.len(),
                tick,
            });
        }
        self.entries.push((tick, event));
        Ok(())
    }

    pub fn entries(&self) -> &[(u64, Event)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn parse(text: &str) -> Result<Self, ScriptError> {
        let mut entries = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.trim();
            if content.is_empty() || content.starts_with('#') {
                continue;
            }
            let syntax = |reason: &str| ScriptError::Syntax {
                line,
                reason: reason.to_string(),
            };
            let rest = content
                .strip_prefix('@')
                .ok_or_else(|| syntax("expected `@<tick> <sensor>.<event>=<value>@<likelihood>`"))?;
            let (tick, event) = rest
                .split_once(char::is_whitespace)
                .ok_or_else(|| syntax("missing event"))?;
            let tick: u64 = tick.parse().map_err(|_| syntax("invalid tick"))?;
            let (channel, rest) = event.trim().split_once('=').ok_or_else(|| syntax("missing `=`"))?;
            let (sensor, name) = channel
                .split_once('.')
                .ok_or_else(|| syntax("expected `<sensor>.<event>`"))?;
            let (value, likelihood) = rest
                .rsplit_once('@')
                .ok_or_else(|| syntax("missing `@<likelihood>`"))?;
            let likelihood = likelihood
                .parse()
                .map_err(|e: crate::event::LikelihoodError| syntax(&e.to_string()))?;
            entries.push((
                tick,
                Event::new(sensor, name, Value::parse_lenient(value), likelihood),
            ));
        }
        SensorScript::from_entries(entries)
    }

    /// Checks every event against the registry's sensor declarations.
    pub fn check(&self, registry: &Registry) -> Result<(), ScriptError> {
        for (index, (_, e)) in self.entries.iter().enumerate() {
            registry
                .check_event(e)
                .map_err(|source| ScriptError::Undeclared { index, source })?;
        }
        Ok(())
    }

    /// Rebuilds the script an IN-record trace was produced from.
    pub fn from_trace(trace: &[TraceRecord]) -> Self {
        SensorScript {
            entries: trace
                .iter()
                .filter_map(|r| r.as_event().map(|e| (r.tick(), e)))
                .collect(),
        }
    }
}

impl fmt::Display for SensorScript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (tick, e) in &self.entries {
            writeln!(f, "@{tick} {e}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::Likelihood;

    #[test]
    fn parse_and_print() {
        let text = "# presence\n@3 env.humanHere=1@100\n\n@3 thermometer.temperature=-2@90\n";
        let s = SensorScript::parse(text).unwrap();
        assert_eq!(s.entries().len(), 2);
        assert_eq!(s.entries()[1].1.value, Value::Int(-2));
        assert_eq!(
            s.to_string(),
            "@3 env.humanHere=1@100\n@3 thermometer.temperature=-2@90\n"
        );
    }

    #[test]
    fn ticks_must_not_decrease() {
        assert!(matches!(
            SensorScript::parse("@3 a.b=1@100\n@2 a.b=1@100"),
            Err(ScriptError::OutOfOrder { index: 1, tick: 2 })
        ));
        let mut s = SensorScript::new();
        s.push(2, Event::new("a", "b", 1, Likelihood::CERTAIN)).unwrap();
        assert!(s.push(1, Event::new("a", "b", 1, Likelihood::CERTAIN)).is_err());
    }

    #[test]
    fn syntax_errors() {
        for bad in ["3 a.b=1@100", "@x a.b=1@100", "@1 ab=1@100", "@1 a.b=1", "@1 a.b=1@200"] {
            assert!(SensorScript::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn undeclared_sensor() {
        let reg = Registry::from_sources(["sensor env\nevent humanHere: none"], []).unwrap();
        let s = SensorScript::parse("@1 env.humanHere=1@100\n@2 radar.blip=1@100").unwrap();
        assert!(matches!(s.check(&reg), Err(ScriptError::Undeclared { index: 1, .. })));
    }
}
