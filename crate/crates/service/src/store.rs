//! Scenario persistence: one JSON file per scenario under `scenarios/`, plus
//! an `index.json` summary. Every write goes to a temporary file first and is
//! renamed into place.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use scenl::Diagnostic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Draft,
    /// Loaded into the machine in manual mode.
    Loaded,
    /// Loaded and driven by the live tick timer.
    Running,
    Stopped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub id: String,
    pub name: String,
    pub source: String,
    /// Stored as a reusable macro named after the record.
    #[serde(rename = "macro", default)]
    pub is_macro: bool,
    pub status: Status,
    /// Milliseconds since the Unix epoch.
    pub created: u64,
    pub modified: u64,
    #[serde(default)]
    pub diagnostics: Vec<Diagnostic>,
}

impl ScenarioRecord {
    pub fn has_errors(&self) -> bool {
        scenl::lang::has_errors(&self.diagnostics)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub id: String,
    pub name: String,
    #[serde(rename = "macro")]
    pub is_macro: bool,
    pub status: Status,
    pub modified: u64,
}

impl From<&ScenarioRecord> for ScenarioSummary {
    fn from(r: &ScenarioRecord) -> Self {
        ScenarioSummary {
            id: r.id.clone(),
            name: r.name.clone(),
            is_macro: r.is_macro,
            status: r.status,
            modified: r.modified,
        }
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("no scenario with id `{0}`")]
    NotFound(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Corrupt {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub struct ScenarioStore {
    root: PathBuf,
    records: BTreeMap<String, ScenarioRecord>,
}

impl ScenarioStore {
    /// Opens (creating if needed) the store under `root`.
    ///
    /// Scenario files are authoritative; the index is rewritten from them.
    /// Machines do not survive a restart, so loaded and running records come
    /// back as stopped.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        let dir = root.join("scenarios");
        fs::create_dir_all(&dir).map_err(|source| StoreError::Io {
            path: dir.clone(),
            source,
        })?;
        let mut records = BTreeMap::new();
        let entries = fs::read_dir(&dir).map_err(|source| StoreError::Io {
            path: dir.clone(),
            source,
        })?;
        for entry in entries {
            let path = entry
                .map_err(|source| StoreError::Io {
                    path: dir.clone(),
                    source,
                })?
                .path();
            if path.extension().is_none_or(|e| e != "json") {
                continue;
            }
            let text = fs::read_to_string(&path).map_err(|source| StoreError::Io {
                path: path.clone(),
                source,
            })?;
            let mut record: ScenarioRecord =
                serde_json::from_str(&text).map_err(|source| StoreError::Corrupt { path, source })?;
            if matches!(record.status, Status::Loaded | Status::Running) {
                record.status = Status::Stopped;
            }
            records.insert(record.id.clone(), record);
        }
        let store = ScenarioStore { root, records };
        store.write_index()?;
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn list(&self) -> Vec<ScenarioSummary> {
        let mut out: Vec<_> = self.records.values().map(ScenarioSummary::from).collect();
        out.sort_by(|a, b| (a.modified, &a.id).cmp(&(b.modified, &b.id)));
        out
    }

    pub fn get(&self, id: &str) -> Result<&ScenarioRecord, StoreError> {
        self.records.get(id).ok_or_else(|| StoreError::NotFound(id.to_string()))
    }

    pub fn records(&self) -> impl Iterator<Item = &ScenarioRecord> {
        self.records.values()
    }

    pub fn create(
        &mut self,
        name: String,
        source: String,
        is_macro: bool,
        diagnostics: Vec<Diagnostic>,
    ) -> Result<ScenarioRecord, StoreError> {
        let now = now_millis();
        let record = ScenarioRecord {
            id: Uuid::new_v4().to_string(),
            name,
            source,
            is_macro,
            status: Status::Draft,
            created: now,
            modified: now,
            diagnostics,
        };
        self.put(record.clone())?;
        Ok(record)
    }

    pub fn update(
        &mut self,
        id: &str,
        name: Option<String>,
        source: String,
        is_macro: Option<bool>,
        diagnostics: Vec<Diagnostic>,
    ) -> Result<ScenarioRecord, StoreError> {
        let mut record = self.get(id)?.clone();
        if let Some(name) = name {
            record.name = name;
        }
        if let Some(m) = is_macro {
            record.is_macro = m;
        }
        record.source = source;
        record.diagnostics = diagnostics;
        record.status = Status::Draft;
        record.modified = now_millis().max(record.modified);
        self.put(record.clone())?;
        Ok(record)
    }

    pub fn set_status(&mut self, id: &str, status: Status) -> Result<(), StoreError> {
        let mut record = self.get(id)?.clone();
        if record.status != status {
            record.status = status;
            self.put(record)?;
        }
        Ok(())
    }

    pub fn delete(&mut self, id: &str) -> Result<ScenarioRecord, StoreError> {
        let record = self.records.remove(id).ok_or_else(|| StoreError::NotFound(id.to_string()))?;
        let path = self.record_path(id);
        fs::remove_file(&path).map_err(|source| StoreError::Io { path, source })?;
        self.write_index()?;
        Ok(record)
    }

    fn put(&mut self, record: ScenarioRecord) -> Result<(), StoreError> {
        let path = self.record_path(&record.id);
        write_json(&path, &record)?;
        self.records.insert(record.id.clone(), record);
        self.write_index()
    }

    fn record_path(&self, id: &str) -> PathBuf {
        self.root.join("scenarios").join(format!("{id}.json"))
    }

    fn write_index(&self) -> Result<(), StoreError> {
        write_json(&self.root.join("index.json"), &self.list())
    }
}

/// Writes `value` as pretty JSON via a sibling temporary file and a rename.
pub(crate) fn write_json(path: &Path, value: &impl Serialize) -> Result<(), StoreError> {
    let mut text = serde_json::to_string_pretty(value).expect("store types serialize");
    text.push('\n');
    let tmp = path.with_extension("json.tmp");
    let io = |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    };
    fs::write(&tmp, text).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

fn now_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}
