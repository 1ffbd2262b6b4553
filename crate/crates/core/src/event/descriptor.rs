//! Sensor and entity description files.
//!
//! ```text
//! sensor thermometer
//! event temperature: integer
//!
//! entity nabaztag
//! fn sayHello: procedure/0
//! ```
//!
//! A file may hold several descriptors; each starts at its header line.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lang::CallKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueType {
    Integer,
    Text,
    /// The event carries no meaningful value; only its presence matters.
    None,
}

impl ValueType {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "integer" => ValueType::Integer,
            "text" => ValueType::Text,
            "none" => ValueType::None,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorDescriptor {
    pub sensor: String,
    pub events: Vec<(String, ValueType)>,
}

impl SensorDescriptor {
    pub fn event(&self, name: &str) -> Option<ValueType> {
        self.events
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| *t)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionDecl {
    pub name: String,
    pub kind: CallKind,
    pub arity: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityDescriptor {
    pub entity: String,
    pub functions: Vec<FunctionDecl>,
}

impl EntityDescriptor {
    pub fn function(&self, name: &str) -> Option<&FunctionDecl> {
        self.functions.iter().find(|f| f.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Descriptor {
    Sensor(SensorDescriptor),
    Entity(EntityDescriptor),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DescriptorKind {
    Sensor,
    Entity,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {reason}")]
pub struct DescriptorError {
    pub line: usize,
    pub reason: String,
}

fn err(line: usize, reason: impl Into<String>) -> DescriptorError {
    DescriptorError {
        line,
        reason: reason.into(),
    }
}

pub fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn ident(line: usize, s: &str, what: &str) -> Result<String, DescriptorError> {
    if is_ident(s) {
        Ok(s.to_string())
    } else {
        Err(err(line, format!("invalid {what} name `{s}`")))
    }
}

/// Parses every descriptor in `text`.
pub fn parse_descriptors(text: &str) -> Result<Vec<Descriptor>, DescriptorError> {
    let mut out: Vec<Descriptor> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (head, rest) = content
            .split_once(char::is_whitespace)
            .map(|(h, r)| (h, r.trim()))
            .unwrap_or((content, ""));

        match head {
            "sensor" => out.push(Descriptor::Sensor(SensorDescriptor {
                sensor: ident(line, rest, "sensor")?,
                events: Vec::new(),
            })),
            "entity" => out.push(Descriptor::Entity(EntityDescriptor {
                entity: ident(line, rest, "entity")?,
                functions: Vec::new(),
            })),
            "event" => {
                let Some(Descriptor::Sensor(sensor)) = out.last_mut() else {
                    return Err(err(line, "`event` outside a `sensor` block"));
                };
                let (name, ty) = rest
                    .split_once(':')
                    .ok_or_else(|| err(line, "expected `event <name>: <type>`"))?;
                let name = ident(line, name.trim(), "event")?;
                let ty = ValueType::parse(ty.trim()).ok_or_else(|| {
                    err(
                        line,
                        format!("unknown value type `{}` (integer, text, none)", ty.trim()),
                    )
                })?;
                if sensor.event(&name).is_some() {
                    return Err(err(
                        line,
                        format!("duplicate event `{name}` on sensor `{}`", sensor.sensor),
                    ));
                }
                sensor.events.push((name, ty));
            }
            "fn" => {
                let Some(Descriptor::Entity(entity)) = out.last_mut() else {
                    return Err(err(line, "`fn` outside an `entity` block"));
                };
                let (name, sig) = rest
                    .split_once(':')
                    .ok_or_else(|| err(line, "expected `fn <name>: <kind>/<arity>`"))?;
                let name = ident(line, name.trim(), "function")?;
                let (kind, arity) = sig
                    .trim()
                    .split_once('/')
                    .ok_or_else(|| err(line, "expected `<kind>/<arity>`"))?;
                let kind = match kind.trim() {
                    "procedure" => CallKind::Procedure,
                    "integer" => CallKind::Integer,
                    "boolean" => CallKind::Boolean,
                    other => {
                        return Err(err(
                            line,
                            format!("unknown kind `{other}` (procedure, integer, boolean)"),
                        ))
                    }
                };
                let arity = match arity.trim() {
                    "0" => 0,
                    "1" => 1,
                    other => return Err(err(line, format!("arity must be 0 or 1, got `{other}`"))),
                };
                if entity.function(&name).is_some() {
                    return Err(err(
                        line,
                        format!("duplicate function `{name}` on entity `{}`", entity.entity),
                    ));
                }
                entity.functions.push(FunctionDecl { name, kind, arity });
            }
            other => return Err(err(line, format!("unexpected `{other}`"))),
        }
    }

    Ok(out)
}

/// Parses a file holding exactly one descriptor of the requested kind.
pub fn parse_descriptor(text: &str, kind: DescriptorKind) -> Result<Descriptor, DescriptorError> {
    let mut all = parse_descriptors(text)?;
    if all.len() != 1 {
        return Err(err(
            1,
            format!("expected exactly one descriptor, found {}", all.len()),
        ));
    }
    let d = all.remove(0);
    match (&d, kind) {
        (Descriptor::Sensor(_), DescriptorKind::Sensor)
        | (Descriptor::Entity(_), DescriptorKind::Entity) => Ok(d),
        (Descriptor::Sensor(_), DescriptorKind::Entity) => {
            Err(err(1, "expected an entity descriptor, found a sensor"))
        }
        (Descriptor::Entity(_), DescriptorKind::Sensor) => {
            Err(err(1, "expected a sensor descriptor, found an entity"))
        }
    }
}
