//! Threshold rules deriving symbolic events from raw ones.
//!
//! ```text
//! rule cold: if thermometer.temperature < 15 emit cold
//! rule hot:  if thermometer.temperature > 27 emit hot
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::descriptor::is_ident;
use super::registry::SYMBOLIC_SENSOR;
use super::{Event, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
}

impl Comparator {
    pub fn as_str(self) -> &'static str {
        match self {
            Comparator::Lt => "<",
            Comparator::Gt => ">",
            Comparator::Le => "<=",
            Comparator::Ge => ">=",
            Comparator::Eq => "==",
            Comparator::Ne => "!=",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "<" => Comparator::Lt,
            ">" => Comparator::Gt,
            "<=" => Comparator::Le,
            ">=" => Comparator::Ge,
            "==" => Comparator::Eq,
            "!=" => Comparator::Ne,
            _ => return None,
        })
    }

    /// Only `==` and `!=` apply to text.
    pub fn is_ordering(self) -> bool {
        !matches!(self, Comparator::Eq | Comparator::Ne)
    }
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolicRule {
    pub name: String,
    pub sensor: String,
    pub event: String,
    pub comparator: Comparator,
    pub threshold: Value,
    /// Name of the symbolic event raised when the comparison holds.
    pub emit: String,
}

impl SymbolicRule {
    pub fn new(
        name: &str,
        sensor: &str,
        event: &str,
        comparator: Comparator,
        threshold: impl Into<Value>,
        emit: &str,
    ) -> Self {
        SymbolicRule {
            name: name.to_string(),
            sensor: sensor.to_string(),
            event: event.to_string(),
            comparator,
            threshold: threshold.into(),
            emit: emit.to_string(),
        }
    }

    fn matches_source(&self, event: &Event) -> bool {
        self.sensor == event.sensor && self.event == event.name
    }

    /// Evaluates `value <comparator> threshold`.
    pub fn holds(&self, value: &Value) -> Result<bool, RuleError> {
        use std::cmp::Ordering::*;
        if self.comparator.is_ordering() {
            let (Some(v), Some(t)) = (value.as_int(), self.threshold.as_int()) else {
                return Err(RuleError::Type {
                    rule: self.name.clone(),
                    value: value.clone(),
                });
            };
            let ord = v.cmp(&t);
            return Ok(match self.comparator {
                Comparator::Lt => ord == Less,
                Comparator::Gt => ord == Greater,
                Comparator::Le => ord != Greater,
                Comparator::Ge => ord != Less,
                Comparator::Eq | Comparator::Ne => unreachable!(),
            });
        }
        let eq = *value == self.threshold;
        Ok(if self.comparator == Comparator::Eq {
            eq
        } else {
            !eq
        })
    }
}

impl fmt::Display for SymbolicRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "rule {}: if {}.{} {} {} emit {}",
            self.name, self.sensor, self.event, self.comparator, self.threshold, self.emit
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuleError {
    #[error("rule `{rule}` compares a non-integer value `{value}`")]
    Type { rule: String, value: Value },
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
}

/// Symbolic events raised by `event`, in rule declaration order.
///
/// Each carries the source value and likelihood and is attributed to the
/// `symbolic` pseudo-sensor. Symbolic events never feed back into rules.
pub fn apply_rules(event: &Event, rules: &[SymbolicRule]) -> Result<Vec<Event>, RuleError> {
    if event.sensor == SYMBOLIC_SENSOR {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for rule in rules.iter().filter(|r| r.matches_source(event)) {
        if rule.holds(&event.value)? {
            out.push(Event {
                sensor: SYMBOLIC_SENSOR.to_string(),
                name: rule.emit.clone(),
                value: event.value.clone(),
                likelihood: event.likelihood,
                seq: 0,
            });
        }
    }
    Ok(out)
}

/// Symbolic event names whose rules watch `event`'s channel but no longer
/// hold, and which no other rule raised for this same event.
///
/// The interpreter drops these from the environment so that a symbolic
/// channel reflects the current reading rather than a stale one.
pub fn retracted_events(event: &Event, rules: &[SymbolicRule]) -> Result<Vec<String>, RuleError> {
    if event.sensor == SYMBOLIC_SENSOR {
        return Ok(Vec::new());
    }
    let mut held = Vec::new();
    let mut failed = Vec::new();
    for rule in rules.iter().filter(|r| r.matches_source(event)) {
        if rule.holds(&event.value)? {
            held.push(rule.emit.as_str());
        } else {
            failed.push(rule.emit.as_str());
        }
    }
    let mut out: Vec<String> = Vec::new();
    for name in failed {
        if !held.contains(&name) && !out.iter().any(|n| n == name) {
            out.push(name.to_string());
        }
    }
    Ok(out)
}

/// Parses a rule file. Blank lines and `#` comments are ignored.
pub fn parse_rules(text: &str) -> Result<Vec<SymbolicRule>, RuleError> {
    let mut rules: Vec<SymbolicRule> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let syntax = |reason: &str| RuleError::Syntax {
            line,
            reason: reason.to_string(),
        };
        let rest = content
            .strip_prefix("rule ")
            .ok_or_else(|| syntax("expected `rule <name>: if <sensor>.<event> <op> <value> emit <name>`"))?;
        let (name, body) = rest.split_once(':').ok_or_else(|| syntax("missing `:`"))?;
        let name = name.trim();
        if !is_ident(name) {
            return Err(syntax(&format!("invalid rule name `{name}`")));
        }
        let words: Vec<&str> = body.split_whitespace().collect();
        let [kw_if, source, op, threshold, kw_emit, emit] = words[..] else {
            return Err(syntax("expected `if <sensor>.<event> <op> <value> emit <name>`"));
        };
        if kw_if != "if" || kw_emit != "emit" {
            return Err(syntax("expected `if ... emit ...`"));
        }
        let (sensor, event) = source
            .split_once('.')
            .filter(|(s, e)| is_ident(s) && is_ident(e))
            .ok_or_else(|| syntax(&format!("invalid source `{source}`")))?;
        let comparator =
            Comparator::parse(op).ok_or_else(|| syntax(&format!("unknown comparator `{op}`")))?;
        let threshold = Value::parse_lenient(threshold);
        if comparator.is_ordering() && threshold.as_int().is_none() {
            return Err(syntax(&format!(
                "`{op}` needs an integer threshold, got `{threshold}`"
            )));
        }
        if !is_ident(emit) {
            return Err(syntax(&format!("invalid event name `{emit}`")));
        }
        if rules.iter().any(|r| r.name == name) {
            return Err(syntax(&format!("duplicate rule `{name}`")));
        }
        rules.push(SymbolicRule {
            name: name.to_string(),
            sensor: sensor.to_string(),
            event: event.to_string(),
            comparator,
            threshold,
            emit: emit.to_string(),
        });
    }
    Ok(rules)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::Likelihood;

    fn thermostat() -> Vec<SymbolicRule> {
        parse_rules(
            "rule cold: if thermometer.temperature < 15 emit cold\n\
             rule hot: if thermometer.temperature > 27 emit hot\n",
        )
        .unwrap()
    }

    fn reading(v: i64) -> Event {
        Event::new("thermometer", "temperature", v, Likelihood::CERTAIN)
    }

    fn names(events: &[Event]) -> Vec<&str> {
        events.iter().map(|e| e.name.as_str()).collect()
    }

    #[test]
    fn cold_and_hot() {
        let rules = thermostat();
        let cold = apply_rules(&reading(14), &rules).unwrap();
        assert_eq!(names(&cold), ["cold"]);
        assert_eq!(cold[0].sensor, "symbolic");
        assert_eq!(cold[0].value, Value::Int(14));
        assert_eq!(names(&apply_rules(&reading(28), &rules).unwrap()), ["hot"]);
    }

    #[test]
    fn comfortable_temperature_emits_nothing() {
        // 20 < 15 is false and 20 > 27 is false
        let by_hand = (20 < 15, 20 > 27);
        assert_eq!(by_hand, (false, false));
        assert!(apply_rules(&reading(20), &thermostat()).unwrap().is_empty());
        assert!(apply_rules(&reading(24), &thermostat()).unwrap().is_empty());
    }

    #[test]
    fn likelihood_carried_over() {
        let e = Event::new("thermometer", "temperature", 3, Likelihood::new(42).unwrap());
        let out = apply_rules(&e, &thermostat()).unwrap();
        assert_eq!(out[0].likelihood.percent(), 42);
    }

    #[test]
    fn other_channels_ignored() {
        let e = Event::new("hygrometer", "humidity", 3, Likelihood::CERTAIN);
        assert!(apply_rules(&e, &thermostat()).unwrap().is_empty());
    }

    #[test]
    fn no_chaining_over_symbolic_events() {
        let rules = parse_rules("rule r: if symbolic.cold < 100 emit colder").unwrap();
        let e = Event::new("symbolic", "cold", 3, Likelihood::CERTAIN);
        assert!(apply_rules(&e, &rules).unwrap().is_empty());
    }

    #[test]
    fn ordering_on_text_is_a_type_error() {
        let e = Event::new("thermometer", "temperature", "warm", Likelihood::CERTAIN);
        assert!(matches!(
            apply_rules(&e, &thermostat()),
            Err(RuleError::Type { .. })
        ));
    }

    #[test]
    fn equality_on_text() {
        let rules = parse_rules("rule open: if door.state == open emit opened").unwrap();
        let e = Event::new("door", "state", "open", Likelihood::CERTAIN);
        assert_eq!(names(&apply_rules(&e, &rules).unwrap()), ["opened"]);
    }

    #[test]
    fn retraction() {
        let rules = thermostat();
        assert_eq!(retracted_events(&reading(28), &rules).unwrap(), ["cold"]);
        assert_eq!(retracted_events(&reading(20), &rules).unwrap(), ["cold", "hot"]);
        // another rule raising the same name keeps it alive
        let mut rules = rules;
        rules.push(SymbolicRule::new("c2", "thermometer", "temperature", Comparator::Eq, 30, "cold"));
        assert_eq!(retracted_events(&reading(30), &rules).unwrap(), Vec::<String>::new());
    }

    #[test]
    fn rule_file_errors() {
        assert!(parse_rules("rule a: if t.x < warm emit b").is_err());
        assert!(parse_rules("rule a: if t.x ~ 3 emit b").is_err());
        assert!(parse_rules("rule a if t.x < 3 emit b").is_err());
        assert!(parse_rules("rule a: if t.x < 3 emit b\nrule a: if t.x > 3 emit c").is_err());
        let r = parse_rules("# comment\n\nrule a: if t.x <= -3 emit b").unwrap();
        assert_eq!(r[0].threshold, Value::Int(-3));
        assert_eq!(r[0].to_string(), "rule a: if t.x <= -3 emit b");
    }
}
