use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::descriptor::{parse_descriptors, Descriptor, DescriptorError, EntityDescriptor, SensorDescriptor, ValueType};
use super::rules::{parse_rules, RuleError, SymbolicRule};
use super::{Event, Value};
use crate::lang::Program;

/// Pseudo-sensor under which rule-derived events are published.
pub const SYMBOLIC_SENSOR: &str = "symbolic";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("{0}")]
    Descriptor(#[from] DescriptorError),
    #[error("{0}")]
    Rule(#[from] RuleError),
    #[error("`{0}` is declared as both a sensor and an entity")]
    NamespaceConflict(String),
    #[error("`{0}` is declared twice")]
    Duplicate(String),
    #[error("`symbolic` is reserved for rule-derived events")]
    Reserved,
    #[error("rule `{rule}` watches unknown channel `{sensor}.{event}`")]
    UnknownSource {
        rule: String,
        sensor: String,
        event: String,
    },
    #[error("rule `{rule}` orders values of `{sensor}.{event}`, which is not integer-typed")]
    NonIntegerSource {
        rule: String,
        sensor: String,
        event: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EventCheckError {
    #[error("unknown sensor `{0}`")]
    UnknownSensor(String),
    #[error("sensor `{sensor}` has no event `{event}`")]
    UnknownEvent { sensor: String, event: String },
    #[error("`{sensor}.{event}` expects an integer, got `{value}`")]
    WrongType {
        sensor: String,
        event: String,
        value: Value,
    },
    #[error("symbolic events are derived by rules and cannot be injected")]
    Symbolic,
}

/// The callable and observable surface a scenario is checked against:
/// sensors, entities, rules (which populate the `symbolic` namespace) and
/// named macros.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Registry {
    pub sensors: BTreeMap<String, SensorDescriptor>,
    pub entities: BTreeMap<String, EntityDescriptor>,
    pub rules: Vec<SymbolicRule>,
    pub macros: BTreeMap<String, Program>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a registry from descriptor file contents and rule file contents.
    pub fn from_sources<'a>(
        descriptors: impl IntoIterator<Item = &'a str>,
        rules: impl IntoIterator<Item = &'a str>,
    ) -> Result<Self, RegistryError> {
        let mut reg = Registry::new();
        for text in descriptors {
            for d in parse_descriptors(text)? {
                reg.add_descriptor(d)?;
            }
        }
        for text in rules {
            reg.add_rules(parse_rules(text)?)?;
        }
        Ok(reg)
    }

    pub fn add_descriptor(&mut self, d: Descriptor) -> Result<(), RegistryError> {
        let name = match &d {
            Descriptor::Sensor(s) => &s.sensor,
            Descriptor::Entity(e) => &e.entity,
        };
        if name == SYMBOLIC_SENSOR {
            return Err(RegistryError::Reserved);
        }
        let (same, other) = match &d {
            Descriptor::Sensor(_) => (self.sensors.contains_key(name), self.entities.contains_key(name)),
            Descriptor::Entity(_) => (self.entities.contains_key(name), self.sensors.contains_key(name)),
        };
        if same {
            return Err(RegistryError::Duplicate(name.clone()));
        }
        if other {
            return Err(RegistryError::NamespaceConflict(name.clone()));
        }
        match d {
            Descriptor::Sensor(s) => {
                self.sensors.insert(s.sensor.clone(), s);
            }
            Descriptor::Entity(e) => {
                self.entities.insert(e.entity.clone(), e);
            }
        }
        Ok(())
    }

    /// Appends rules after checking each one watches a declared channel of a
    /// compatible type.
    pub fn add_rules(&mut self, rules: Vec<SymbolicRule>) -> Result<(), RegistryError> {
        for rule in &rules {
            let ty = self
                .sensors
                .get(&rule.sensor)
                .and_then(|s| s.event(&rule.event))
                .ok_or_else(|| RegistryError::UnknownSource {
                    rule: rule.name.clone(),
                    sensor: rule.sensor.clone(),
                    event: rule.event.clone(),
                })?;
            if rule.comparator.is_ordering() && ty != ValueType::Integer {
                return Err(RegistryError::NonIntegerSource {
                    rule: rule.name.clone(),
                    sensor: rule.sensor.clone(),
                    event: rule.event.clone(),
                });
            }
            if self.rules.iter().any(|r| r.name == rule.name) {
                return Err(RegistryError::Duplicate(rule.name.clone()));
            }
        }
        self.rules.extend(rules);
        Ok(())
    }

    pub fn add_macro(&mut self, name: impl Into<String>, body: Program) {
        self.macros.insert(name.into(), body);
    }

    pub fn sensor(&self, name: &str) -> Option<&SensorDescriptor> {
        self.sensors.get(name)
    }

    pub fn entity(&self, name: &str) -> Option<&EntityDescriptor> {
        self.entities.get(name)
    }

    /// Whether some rule raises `symbolic.<name>`.
    pub fn emits_symbolic(&self, name: &str) -> bool {
        self.rules.iter().any(|r| r.emit == name)
    }

    /// Value type of a symbolic event: that of the channel its first rule watches.
    pub fn symbolic_type(&self, name: &str) -> Option<ValueType> {
        let rule = self.rules.iter().find(|r| r.emit == name)?;
        self.sensors.get(&rule.sensor)?.event(&rule.event)
    }

    /// Value type of `sensor.event`, including the `symbolic` namespace.
    pub fn event_type(&self, sensor: &str, event: &str) -> Option<ValueType> {
        if sensor == SYMBOLIC_SENSOR {
            self.symbolic_type(event)
        } else {
            self.sensors.get(sensor)?.event(event)
        }
    }

    /// Checks that a raw event may be injected.
    pub fn check_event(&self, event: &Event) -> Result<(), EventCheckError> {
        if event.sensor == SYMBOLIC_SENSOR {
            return Err(EventCheckError::Symbolic);
        }
        let sensor = self
            .sensors
            .get(&event.sensor)
            .ok_or_else(|| EventCheckError::UnknownSensor(event.sensor.clone()))?;
        let ty = sensor
            .event(&event.name)
            .ok_or_else(|| EventCheckError::UnknownEvent {
                sensor: event.sensor.clone(),
                event: event.name.clone(),
            })?;
        if ty == ValueType::Integer && event.value.as_int().is_none() {
            return Err(EventCheckError::WrongType {
                sensor: event.sensor.clone(),
                event: event.name.clone(),
                value: event.value.clone(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{Comparator, Likelihood};

    const HOUSE: &str = "sensor thermometer\nevent temperature: integer\n\
                         sensor door\nevent state: text\n\
                         entity heater\nfn on: procedure/0\nfn off: procedure/0\n";

    #[test]
    fn builds_from_text() {
        let reg = Registry::from_sources(
            [HOUSE],
            ["rule cold: if thermometer.temperature < 15 emit cold"],
        )
        .unwrap();
        assert!(reg.sensor("door").is_some());
        assert!(reg.entity("heater").is_some());
        assert!(reg.emits_symbolic("cold"));
        assert_eq!(reg.event_type("symbolic", "cold"), Some(ValueType::Integer));
    }

    #[test]
    fn namespaces_are_disjoint() {
        let err = Registry::from_sources([HOUSE, "entity door\nfn open: procedure/0"], []).unwrap_err();
        assert_eq!(err, RegistryError::NamespaceConflict("door".into()));
        let err = Registry::from_sources([HOUSE, "sensor thermometer"], []).unwrap_err();
        assert_eq!(err, RegistryError::Duplicate("thermometer".into()));
        let err = Registry::from_sources(["sensor symbolic"], []).unwrap_err();
        assert_eq!(err, RegistryError::Reserved);
    }

    #[test]
    fn rules_must_watch_declared_integer_channels() {
        let mut reg = Registry::from_sources([HOUSE], []).unwrap();
        let bad = SymbolicRule::new("r", "thermometer", "humidity", Comparator::Lt, 3, "x");
        assert!(matches!(reg.add_rules(vec![bad]), Err(RegistryError::UnknownSource { .. })));
        let bad = SymbolicRule::new("r", "door", "state", Comparator::Lt, 3, "x");
        assert!(matches!(reg.add_rules(vec![bad]), Err(RegistryError::NonIntegerSource { .. })));
        let ok = SymbolicRule::new("r", "door", "state", Comparator::Eq, "open", "opened");
        assert!(reg.add_rules(vec![ok]).is_ok());
    }

    #[test]
    fn event_checks() {
        let reg = Registry::from_sources([HOUSE], []).unwrap();
        let ok = Event::new("thermometer", "temperature", 24, Likelihood::CERTAIN);
        assert!(reg.check_event(&ok).is_ok());
        let e = Event::new("thermometer", "temperature", "warm", Likelihood::CERTAIN);
        assert!(matches!(reg.check_event(&e), Err(EventCheckError::WrongType { .. })));
        let e = Event::new("radar", "blip", 1, Likelihood::CERTAIN);
        assert_eq!(reg.check_event(&e), Err(EventCheckError::UnknownSensor("radar".into())));
        let e = Event::new("door", "knock", 1, Likelihood::CERTAIN);
        assert!(matches!(reg.check_event(&e), Err(EventCheckError::UnknownEvent { .. })));
        let e = Event::new("symbolic", "cold", 1, Likelihood::CERTAIN);
        assert_eq!(reg.check_event(&e), Err(EventCheckError::Symbolic));
    }
}
