//! The demo living room: a greeting scenario, a thermostat scenario, and the
//! registry, rules and sensor scripts they run against.

use crate::event::{parse_rules, Registry, SymbolicRule};
use crate::lang::{parse_macro_library, Program};

/// Waits for a person, then has all three entities greet in parallel.
pub const GREETING: &str = include_str!("../samples/greeting.scenl");
/// A person shows up at tick 3.
pub const GREETING_SCRIPT: &str = include_str!("../samples/greeting.script");
/// Heater on when cold, off once hot, forever.
pub const THERMOSTAT: &str = include_str!("../samples/thermostat.scenl");
pub const THERMOSTAT_SCRIPT: &str = include_str!("../samples/thermostat.script");
pub const HOUSE_REGISTRY: &str = include_str!("../samples/house.registry");
pub const THERMOSTAT_RULES: &str = include_str!("../samples/thermostat.rules");
pub const GREETING_MACROS: &str = include_str!("../samples/greetings.macros");

pub fn rules() -> Vec<SymbolicRule> {
    parse_rules(THERMOSTAT_RULES).expect("sample rules parse")
}

/// House descriptors only, without rules or macros.
pub fn house() -> Registry {
    Registry::from_sources([HOUSE_REGISTRY], []).expect("sample registry parses")
}

/// House descriptors with the thermostat rules and greeting macros.
pub fn registry() -> Registry {
    let mut reg = house();
    reg.add_rules(rules()).expect("sample rules fit the registry");
    reg.macros = parse_macro_library(GREETING_MACROS).expect("sample macros parse");
    reg
}

pub fn greeting() -> Program {
    crate::lang::parse(GREETING).expect("sample scenario parses")
}
