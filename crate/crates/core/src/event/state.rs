use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Event, Likelihood, Value};

/// `(sensor, event name)`
pub type Channel = (String, String);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reading {
    pub value: Value,
    pub likelihood: Likelihood,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("stale event: seq {seq} is not after {last}")]
pub struct StaleEvent {
    pub seq: u64,
    pub last: u64,
}

/// Latest reading per channel, plus the event currently being delivered.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvState {
    latest: BTreeMap<Channel, Reading>,
    pulse: Option<Event>,
    last_seq: u64,
}

impl EnvState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records `event` as the newest reading on its channel and makes it the
    /// pulse. `event.seq` must exceed every sequence number seen so far.
    pub fn ingest(&mut self, event: Event) -> Result<(), StaleEvent> {
        if event.seq <= self.last_seq {
            return Err(StaleEvent {
                seq: event.seq,
                last: self.last_seq,
            });
        }
        self.last_seq = event.seq;
        self.latest.insert(
            event.channel(),
            Reading {
                value: event.value.clone(),
                likelihood: event.likelihood,
                seq: event.seq,
            },
        );
        self.pulse = Some(event);
        Ok(())
    }

    /// Stamps `event` with the next sequence number and ingests it.
    pub fn ingest_next(&mut self, mut event: Event) -> u64 {
        event.seq = self.last_seq + 1;
        let seq = event.seq;
        self.ingest(event).expect("next seq is always fresh");
        seq
    }

    pub fn get(&self, sensor: &str, event: &str) -> Option<&Reading> {
        self.latest.get(&(sensor.to_string(), event.to_string()))
    }

    /// Drops a channel's reading.
    pub fn retract(&mut self, sensor: &str, event: &str) {
        self.latest.remove(&(sensor.to_string(), event.to_string()));
    }

    pub fn pulse(&self) -> Option<&Event> {
        self.pulse.as_ref()
    }

    pub fn set_pulse(&mut self, event: Option<Event>) {
        self.pulse = event;
    }

    pub fn clear_pulse(&mut self) {
        self.pulse = None;
    }

    pub fn last_seq(&self) -> u64 {
        self.last_seq
    }

    pub fn readings(&self) -> impl Iterator<Item = (&Channel, &Reading)> {
        self.latest.iter()
    }
}
