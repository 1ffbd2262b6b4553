//! The single consumer of the command queue. It owns the machine, so every
//! inject and tick is applied in the order it was dequeued, and that order is
//! exactly the order records reach the trace and the broadcast.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::{broadcast, mpsc, oneshot};
use tokio::task::AbortHandle;

use scenl::interp::{BranchInfo, InterpError, MachineStatus};
use scenl::{Event, Input, Machine, Output, TraceRecord};

use crate::delivery::Delivery;
use crate::store::{ScenarioStore, Status};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Ticks only arrive through explicit tick commands.
    #[default]
    Manual,
    /// An internal timer issues one tick per tick period.
    Live,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SessionError {
    #[error("no scenario is running")]
    NoRunningMachine,
    #[error("scenario `{0}` is already running")]
    AlreadyRunning(String),
    #[error("invalid event: {0}")]
    InvalidEvent(String),
    #[error("run halted: {0}")]
    Halted(String),
    #[error("session is shut down")]
    Closed,
}

#[derive(Debug, Clone, Serialize)]
pub struct Snapshot {
    pub scenario: String,
    pub mode: Mode,
    /// False once the run was stopped or halted.
    pub active: bool,
    pub clock: u64,
    pub status: MachineStatus,
    pub branches: Vec<BranchInfo>,
    pub total_records: usize,
    /// The most recent records, oldest first.
    pub records: Vec<TraceRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StopReport {
    pub scenario: String,
    pub clock: u64,
    pub total_records: usize,
}

type Reply<T> = oneshot::Sender<Result<T, SessionError>>;

pub(crate) enum Command {
    Start {
        scenario: String,
        machine: Box<Machine>,
        mode: Mode,
        reply: Reply<Vec<TraceRecord>>,
    },
    Stop {
        reply: Reply<StopReport>,
    },
    Inject {
        event: Event,
        reply: Reply<Vec<TraceRecord>>,
    },
    Tick {
        n: u64,
        reply: Reply<Vec<TraceRecord>>,
    },
    Snapshot {
        last: usize,
        reply: oneshot::Sender<Option<Snapshot>>,
    },
    Entities {
        reply: oneshot::Sender<BTreeMap<String, Vec<Output>>>,
    },
    LiveTick {
        generation: u64,
    },
    DeliveryFailed(TraceRecord),
}

/// Cheap to clone; every clone feeds the same queue.
#[derive(Clone)]
pub struct SessionHandle {
    tx: mpsc::Sender<Command>,
    records: broadcast::Sender<TraceRecord>,
}

impl SessionHandle {
    pub(crate) fn spawn(
        store: Arc<Mutex<ScenarioStore>>,
        webhooks: &BTreeMap<String, String>,
        tick_period: Duration,
        stream_capacity: usize,
    ) -> Self {
        let (tx, rx) = mpsc::channel(256);
        let (records, _) = broadcast::channel(stream_capacity.max(1));
        let actor = Actor {
            store,
            delivery: Delivery::new(webhooks, tx.downgrade()),
            records: records.clone(),
            self_tx: tx.downgrade(),
            tick_period,
            run: None,
            generation: 0,
        };
        tokio::spawn(actor.run(rx));
        SessionHandle { tx, records }
    }

    /// Receives every record emitted after this call, in emission order.
    pub fn subscribe(&self) -> broadcast::Receiver<TraceRecord> {
        self.records.subscribe()
    }

    async fn call<T>(&self, make: impl FnOnce(Reply<T>) -> Command) -> Result<T, SessionError> {
        let (reply, rx) = oneshot::channel();
        self.tx.send(make(reply)).await.map_err(|_| SessionError::Closed)?;
        rx.await.map_err(|_| SessionError::Closed)?
    }

    pub async fn start(&self, scenario: String, machine: Machine, mode: Mode) -> Result<Vec<TraceRecord>, SessionError> {
        self.call(|reply| Command::Start {
            scenario,
            machine: Box::new(machine),
            mode,
            reply,
        })
        .await
    }

    pub async fn stop(&self) -> Result<StopReport, SessionError> {
        self.call(|reply| Command::Stop { reply }).await
    }

    pub async fn inject(&self, event: Event) -> Result<Vec<TraceRecord>, SessionError> {
        self.call(|reply| Command::Inject { event, reply }).await
    }

    pub async fn tick(&self, n: u64) -> Result<Vec<TraceRecord>, SessionError> {
        self.call(|reply| Command::Tick { n, reply }).await
    }

    pub async fn snapshot(&self, last: usize) -> Result<Option<Snapshot>, SessionError> {
        let (reply, rx) = oneshot::channel();
        self.tx
            .send(Command::Snapshot { last, reply })
            .await
            .map_err(|_| SessionError::Closed)?;
        rx.await.map_err(|_| SessionError::Closed)
    }

    pub async fn entities(&self) -> Result<BTreeMap<String, Vec<Output>>, SessionError> {
        let (reply, rx) = oneshot::channel();
        self.tx
            .send(Command::Entities { reply })
            .await
            .map_err(|_| SessionError::Closed)?;
        rx.await.map_err(|_| SessionError::Closed)
    }
}

struct Run {
    scenario: String,
    mode: Mode,
    machine: Machine,
    active: bool,
    trace: Vec<TraceRecord>,
    ticker: Option<AbortHandle>,
    generation: u64,
}

impl Run {
    fn deactivate(&mut self) {
        self.active = false;
        if let Some(t) = self.ticker.take() {
            t.abort();
        }
    }
}

struct Actor {
    store: Arc<Mutex<ScenarioStore>>,
    delivery: Delivery,
    records: broadcast::Sender<TraceRecord>,
    self_tx: mpsc::WeakSender<Command>,
    tick_period: Duration,
    /// The current run, or the last one once stopped (kept for snapshots).
    run: Option<Run>,
    generation: u64,
}

impl Actor {
    async fn run(mut self, mut rx: mpsc::Receiver<Command>) {
        while let Some(cmd) = rx.recv().await {
            self.handle(cmd);
        }
        if let Some(run) = &mut self.run {
            run.deactivate();
        }
    }

    fn handle(&mut self, cmd: Command) {
        match cmd {
            Command::Start {
                scenario,
                machine,
                mode,
                reply,
            } => {
                let _ = reply.send(self.start(scenario, *machine, mode));
            }
            Command::Stop { reply } => {
                let _ = reply.send(self.stop());
            }
            Command::Inject { event, reply } => {
                let _ = reply.send(self.inject(event));
            }
            Command::Tick { n, reply } => {
                let _ = reply.send(self.ticks(n));
            }
            Command::Snapshot { last, reply } => {
                let _ = reply.send(self.snapshot(last));
            }
            Command::Entities { reply } => {
                let _ = reply.send(self.delivery.mock_log());
            }
            Command::LiveTick { generation } => {
                let current = self
                    .run
                    .as_ref()
                    .is_some_and(|r| r.active && r.generation == generation);
                if current {
                    if let Err(e) = self.ticks(1) {
                        tracing::warn!(error = %e, "live run halted");
                    }
                }
            }
            Command::DeliveryFailed(record) => {
                if let Some(run) = &mut self.run {
                    run.trace.push(record.clone());
                    let _ = self.records.send(record);
                }
            }
        }
    }

    fn start(&mut self, scenario: String, machine: Machine, mode: Mode) -> Result<Vec<TraceRecord>, SessionError> {
        if let Some(run) = self.run.as_ref().filter(|r| r.active) {
            return Err(SessionError::AlreadyRunning(run.scenario.clone()));
        }
        self.generation += 1;
        self.delivery.reset();
        let ticker = (mode == Mode::Live).then(|| self.spawn_ticker());
        self.run = Some(Run {
            scenario: scenario.clone(),
            mode,
            machine,
            active: true,
            trace: Vec::new(),
            ticker,
            generation: self.generation,
        });
        self.set_status(
            &scenario,
            match mode {
                Mode::Manual => Status::Loaded,
                Mode::Live => Status::Running,
            },
        );
        let mut out = Vec::new();
        self.apply(Input::None, &mut out)?;
        Ok(out)
    }

    fn spawn_ticker(&self) -> AbortHandle {
        let tx = self.self_tx.clone();
        let generation = self.generation;
        let period = self.tick_period.max(Duration::from_millis(1));
        tokio::spawn(async move {
            let mut interval = tokio::time::interval(period);
            interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
            interval.tick().await;
            loop {
                interval.tick().await;
                let Some(tx) = tx.upgrade() else { break };
                if tx.send(Command::LiveTick { generation }).await.is_err() {
                    break;
                }
            }
        })
        .abort_handle()
    }

    fn stop(&mut self) -> Result<StopReport, SessionError> {
        let run = self
            .run
            .as_mut()
            .filter(|r| r.active)
            .ok_or(SessionError::NoRunningMachine)?;
        run.deactivate();
        let report = StopReport {
            scenario: run.scenario.clone(),
            clock: run.machine.clock(),
            total_records: run.trace.len(),
        };
        self.set_status(&report.scenario, Status::Stopped);
        Ok(report)
    }

    fn active_run(&mut self) -> Result<&mut Run, SessionError> {
        self.run
            .as_mut()
            .filter(|r| r.active)
            .ok_or(SessionError::NoRunningMachine)
    }

    fn inject(&mut self, event: Event) -> Result<Vec<TraceRecord>, SessionError> {
        let run = self.active_run()?;
        run.machine
            .registry()
            .check_event(&event)
            .map_err(|e| SessionError::InvalidEvent(e.to_string()))?;
        let mut out = Vec::new();
        let record = TraceRecord::input(run.machine.clock(), &event);
        self.emit(record, &mut out);
        self.apply(Input::Event(event), &mut out)?;
        Ok(out)
    }

    fn ticks(&mut self, n: u64) -> Result<Vec<TraceRecord>, SessionError> {
        self.active_run()?;
        let mut out = Vec::new();
        for _ in 0..n {
            self.apply(Input::Tick, &mut out)?;
        }
        Ok(out)
    }

    /// Steps the machine and publishes what it produced. A runtime error
    /// halts the run after publishing whatever was emitted before it.
    fn apply(&mut self, input: Input, out: &mut Vec<TraceRecord>) -> Result<(), SessionError> {
        let run = self.run.as_mut().expect("caller checked for an active run");
        let (outputs, error) = match run.machine.step(input) {
            Ok(outputs) => (outputs, None),
            Err(e) => (run.machine.drain(), Some(e)),
        };
        for o in &outputs {
            self.delivery.send(o);
            self.emit(TraceRecord::output(o), out);
        }
        match error {
            None => Ok(()),
            Some(e) => {
                let run = self.run.as_mut().expect("run still present");
                run.deactivate();
                let scenario = run.scenario.clone();
                self.set_status(&scenario, Status::Stopped);
                Err(SessionError::Halted(halt_reason(&e)))
            }
        }
    }

    fn emit(&mut self, record: TraceRecord, out: &mut Vec<TraceRecord>) {
        let run = self.run.as_mut().expect("caller checked for a run");
        run.trace.push(record.clone());
        out.push(record.clone());
        let _ = self.records.send(record);
    }

    fn snapshot(&self, last: usize) -> Option<Snapshot> {
        let run = self.run.as_ref()?;
        let skip = run.trace.len().saturating_sub(last);
        Some(Snapshot {
            scenario: run.scenario.clone(),
            mode: run.mode,
            active: run.active,
            clock: run.machine.clock(),
            status: run.machine.status(),
            branches: run.machine.branches(),
            total_records: run.trace.len(),
            records: run.trace[skip..].to_vec(),
        })
    }

    fn set_status(&self, id: &str, status: Status) {
        let mut store = self.store.lock().expect("store lock");
        match store.set_status(id, status) {
            Ok(()) => {}
            // the record may have been deleted while it ran
            Err(crate::store::StoreError::NotFound(_)) => {}
            Err(e) => tracing::error!(error = %e, "could not persist scenario status"),
        }
    }
}

fn halt_reason(e: &InterpError) -> String {
    e.to_string()
}
