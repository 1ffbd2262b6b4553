//! HTTP service around the interpreter: a file-backed scenario store, a
//! registry, one run at a time driven through a serialized command queue, and
//! a newline-delimited JSON stream of trace records.
//!
//! | Method | Path | |
//! |---|---|---|
//! | `GET`/`POST` | `/scenarios` | list, create |
//! | `GET`/`PUT`/`DELETE` | `/scenarios/{id}` | read, update, delete |
//! | `GET`/`PUT` | `/registry` | descriptor and rule sources |
//! | `POST` | `/check` | diagnostics and canonical text |
//! | `POST` | `/run/start`, `/run/stop`, `/run/inject`, `/run/tick` | run control |
//! | `GET` | `/run/snapshot`, `/run/entities` | run state, mock entity log |
//! | `GET` | `/run/stream` | trace records as they happen |

mod api;
mod delivery;
pub mod session;
pub mod store;

use std::collections::BTreeMap;
use std::future::Future;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::net::TcpListener;

use scenl::event::{parse_rules, Registry};
use scenl::{parse, Likelihood, MachineConfig};

pub use api::ApiError;
pub use session::{Mode, SessionError, SessionHandle, Snapshot, StopReport};
pub use store::{ScenarioRecord, ScenarioStore, ScenarioSummary, Status, StoreError};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    /// Wall time per tick in live mode.
    pub tick_period: Duration,
    pub threshold: Likelihood,
    pub step_budget: u64,
    /// Entity name to webhook URL; other entities go to the mock log.
    pub webhooks: BTreeMap<String, String>,
    /// Replaces the stored registry at startup when set.
    pub registry: Option<RegistrySources>,
    /// Records a stream subscriber may fall behind before it is dropped.
    pub stream_capacity: usize,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        let machine = MachineConfig::default();
        ServiceConfig {
            data_dir: data_dir.into(),
            tick_period: Duration::from_millis(100),
            threshold: machine.threshold,
            step_budget: machine.step_budget,
            webhooks: BTreeMap::new(),
            registry: None,
            stream_capacity: 4096,
        }
    }
}

/// Descriptor and rule file contents, as stored in `registry.json`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistrySources {
    #[serde(default)]
    pub descriptors: String,
    #[serde(default)]
    pub rules: String,
}

impl RegistrySources {
    pub fn build(&self) -> Result<Registry, String> {
        let mut reg = Registry::from_sources([self.descriptors.as_str()], []).map_err(|e| e.to_string())?;
        let rules = parse_rules(&self.rules).map_err(|e| format!("rules: {e}"))?;
        reg.add_rules(rules).map_err(|e| format!("rules: {e}"))?;
        Ok(reg)
    }
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("registry: {0}")]
    Registry(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) struct RegistryState {
    pub(crate) sources: RegistrySources,
    pub(crate) registry: Registry,
}

pub(crate) struct AppState {
    store: Arc<Mutex<ScenarioStore>>,
    registry: RwLock<RegistryState>,
    session: SessionHandle,
    config: ServiceConfig,
    /// Flips to true when shutdown begins, ending open streams.
    closing: tokio::sync::watch::Sender<bool>,
}

impl AppState {
    fn store(&self) -> MutexGuard<'_, ScenarioStore> {
        self.store.lock().expect("store lock")
    }

    fn machine_config(&self) -> MachineConfig {
        MachineConfig {
            threshold: self.config.threshold,
            step_budget: self.config.step_budget,
        }
    }

    /// The registry plus every stored macro that parses, except `skip`.
    fn registry_with_macros(&self, store: &ScenarioStore, skip: Option<&str>) -> Registry {
        let mut reg = self.registry.read().expect("registry lock").registry.clone();
        for r in store.records().filter(|r| r.is_macro && Some(r.name.as_str()) != skip) {
            if let Ok(p) = parse(&r.source) {
                reg.add_macro(r.name.clone(), p);
            }
        }
        reg
    }

    fn replace_registry(&self, sources: RegistrySources, registry: Registry) -> Result<(), ApiError> {
        store::write_json(&self.config.data_dir.join("registry.json"), &sources)
            .map_err(|e| ApiError::Internal(e.to_string()))?;
        *self.registry.write().expect("registry lock") = RegistryState { sources, registry };
        Ok(())
    }
}

pub struct Service {
    state: Arc<AppState>,
}

impl Service {
    /// Opens the data directory and starts the session task. Must be called
    /// from within a Tokio runtime.
    pub fn open(config: ServiceConfig) -> Result<Self, ServiceError> {
        let store = ScenarioStore::open(&config.data_dir)?;
        let registry_path = config.data_dir.join("registry.json");
        let sources = match &config.registry {
            Some(s) => {
                store::write_json(&registry_path, s)?;
                s.clone()
            }
            None if registry_path.exists() => {
                let text = std::fs::read_to_string(&registry_path)?;
                serde_json::from_str(&text).map_err(|e| ServiceError::Registry(e.to_string()))?
            }
            None => RegistrySources::default(),
        };
        let registry = sources.build().map_err(ServiceError::Registry)?;
        let store = Arc::new(Mutex::new(store));
        let session = SessionHandle::spawn(
            store.clone(),
            &config.webhooks,
            config.tick_period,
            config.stream_capacity,
        );
        Ok(Service {
            state: Arc::new(AppState {
                store,
                registry: RwLock::new(RegistryState { sources, registry }),
                session,
                config,
                closing: tokio::sync::watch::Sender::new(false),
            }),
        })
    }

    pub fn router(&self) -> axum::Router {
        api::router(self.state.clone())
    }

    pub fn session(&self) -> &SessionHandle {
        &self.state.session
    }

    /// Serves until `shutdown` resolves, then closes open streams and lets
    /// in-flight requests finish. Store writes are synchronous, so nothing is
    /// left to flush afterwards.
    pub async fn serve(self, listener: TcpListener, shutdown: impl Future<Output = ()> + Send + 'static) -> std::io::Result<()> {
        let state = self.state.clone();
        axum::serve(listener, self.router())
            .with_graceful_shutdown(async move {
                shutdown.await;
                state.closing.send_replace(true);
            })
            .await
    }
}

impl From<StoreError> for std::io::Error {
    fn from(e: StoreError) -> Self {
        std::io::Error::other(e)
    }
}
