use std::collections::VecDeque;
use std::sync::Arc;

use serde::Serialize;

use super::cond::{evaluate_cond, read_variable, UnknownChannel};
use super::{ActionCommand, CancelNotice, InterpError, LoadError, Output};
use crate::event::{apply_rules, retracted_events, EnvState, Event, Likelihood, Registry, SYMBOLIC_SENSOR};
use crate::lang::{expand_macros, has_errors, resolve, Call, CallKind, Cond, Instr, InstrKind, Program, Span};

/// Compiled, cheaply clonable form of an instruction list.
type Block = Arc<[Node]>;

#[derive(Debug, Clone)]
enum Node {
    Action {
        call: Arc<Call>,
        interruptible: bool,
        span: Span,
    },
    Repeat {
        count: u32,
        body: Block,
    },
    While {
        cond: Arc<Cond>,
        body: Block,
    },
    Conditional {
        cond: Arc<Cond>,
        then_body: Block,
        else_body: Option<Block>,
    },
    EventWait {
        cond: Arc<Cond>,
        body: Block,
    },
    Parallel(Vec<Block>),
    Timer(u32),
    Break,
    MacroCall {
        name: String,
        span: Span,
    },
}

fn compile(list: &[Instr]) -> Block {
    list.iter().map(compile_instr).collect()
}

fn compile_instr(instr: &Instr) -> Node {
    match &instr.kind {
        InstrKind::Action(call) => Node::Action {
            call: Arc::new(call.clone()),
            interruptible: false,
            span: instr.span,
        },
        InstrKind::ActionInterrupt(call) => Node::Action {
            call: Arc::new(call.clone()),
            interruptible: true,
            span: instr.span,
        },
        InstrKind::Repeat { count, body } => Node::Repeat {
            count: *count,
            body: compile(body),
        },
        InstrKind::While { cond, body } => Node::While {
            cond: Arc::new(cond.clone()),
            body: compile(body),
        },
        InstrKind::Conditional {
            cond,
            then_body,
            else_body,
        } => Node::Conditional {
            cond: Arc::new(cond.clone()),
            then_body: compile(then_body),
            else_body: else_body.as_deref().map(compile),
        },
        InstrKind::EventWait { cond, body } => Node::EventWait {
            cond: Arc::new(cond.clone()),
            body: compile(body),
        },
        InstrKind::Parallel(branches) => Node::Parallel(branches.iter().map(|b| compile(b)).collect()),
        InstrKind::Timer(n) => Node::Timer(*n),
        InstrKind::Break => Node::Break,
        InstrKind::MacroCall(name) => Node::MacroCall {
            name: name.clone(),
            span: instr.span,
        },
    }
}

#[derive(Debug, Clone)]
enum FrameKind {
    Block,
    Repeat { remaining: u32 },
    While { cond: Arc<Cond> },
}

#[derive(Debug, Clone)]
struct Frame {
    block: Block,
    index: usize,
    kind: FrameKind,
}

impl Frame {
    fn new(block: Block, kind: FrameKind) -> Self {
        Frame {
            block,
            index: 0,
            kind,
        }
    }
}

#[derive(Debug, Clone)]
enum Wait {
    None,
    /// Armed event wait; checked on each event delivery.
    Cond { cond: Arc<Cond>, body: Block },
    Tick(u64),
    /// Waiting for this many children to finish.
    Join(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum HandleState {
    Active,
    Cancelled,
    Completed,
}

/// Tracks an interruptible action issued by a branch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InterruptHandle {
    pub command: u64,
    pub entity: String,
    pub function: String,
    pub state: HandleState,
}

#[derive(Debug, Clone)]
struct Branch {
    id: u64,
    parent: Option<u64>,
    frames: Vec<Frame>,
    wait: Wait,
    interrupts: Vec<InterruptHandle>,
}

impl Branch {
    fn runnable(&self) -> bool {
        matches!(self.wait, Wait::None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MachineStatus {
    /// Some branch can make progress without new input.
    Running,
    /// Every branch is blocked on an event, a timer or its children.
    Quiescent,
    Finished,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MachineConfig {
    /// Minimum likelihood for a reading to count as true.
    pub threshold: Likelihood,
    /// Scheduling points allowed per step before giving up.
    pub step_budget: u64,
}

impl Default for MachineConfig {
    fn default() -> Self {
        MachineConfig {
            threshold: Likelihood::new(50).expect("50 is a valid percentage"),
            step_budget: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Input {
    Event(Event),
    Tick,
    None,
}

/// What a branch is doing, for snapshots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BranchInfo {
    pub id: u64,
    pub parent: Option<u64>,
    /// `runnable`, `event`, `tick:<t>` or `join:<n>`.
    pub wait: String,
    pub depth: usize,
    pub interrupts: Vec<InterruptHandle>,
}

/// The scenario interpreter: a deterministic, single-owner state machine.
///
/// Branches run cooperatively in id order, one instruction per scheduling
/// point. Inputs are events (ingested, passed through the rules, then offered
/// to armed event waits) and ticks of the virtual clock.
#[derive(Debug, Clone)]
pub struct Machine {
    branches: Vec<Branch>,
    env: EnvState,
    clock: u64,
    outbox: VecDeque<Output>,
    registry: Arc<Registry>,
    config: MachineConfig,
    next_branch: u64,
    next_command: u64,
}

enum Effect {
    Continue,
    Fork(Vec<Block>),
    Terminate,
}

struct Ctx<'a> {
    env: &'a EnvState,
    registry: &'a Registry,
    threshold: Likelihood,
    clock: u64,
}

impl Ctx<'_> {
    fn eval(&self, cond: &Cond, branch: u64) -> Result<bool, InterpError> {
        evaluate_cond(cond, self.env, self.registry, self.threshold).map_err(|e| unknown(branch, e))
    }
}

fn unknown(branch: u64, e: UnknownChannel) -> InterpError {
    InterpError::Runtime {
        branch,
        span: Span::default(),
        reason: e.to_string(),
    }
}

impl Machine {
    /// Expands macros, validates, and prepares a single root branch at the
    /// first instruction. Nothing runs until the first [`Machine::step`].
    pub fn load(
        program: &Program,
        registry: Arc<Registry>,
        config: MachineConfig,
    ) -> Result<Machine, LoadError> {
        let expanded = expand_macros(program, &registry.macros)?;
        let (resolved, diags) = resolve(expanded, &registry);
        if has_errors(&diags) {
            return Err(LoadError::Invalid(diags));
        }
        let root = Branch {
            id: 0,
            parent: None,
            frames: vec![Frame::new(compile(&resolved.instructions), FrameKind::Block)],
            wait: Wait::None,
            interrupts: Vec::new(),
        };
        Ok(Machine {
            branches: vec![root],
            env: EnvState::new(),
            clock: 0,
            outbox: VecDeque::new(),
            registry,
            config,
            next_branch: 1,
            next_command: 1,
        })
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn env(&self) -> &EnvState {
        &self.env
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn config(&self) -> MachineConfig {
        self.config
    }

    pub fn status(&self) -> MachineStatus {
        if self.branches.is_empty() {
            MachineStatus::Finished
        } else if self.branches.iter().any(Branch::runnable) {
            MachineStatus::Running
        } else {
            MachineStatus::Quiescent
        }
    }

    pub fn is_finished(&self) -> bool {
        self.branches.is_empty()
    }

    pub fn branches(&self) -> Vec<BranchInfo> {
        self.branches
            .iter()
            .map(|b| BranchInfo {
                id: b.id,
                parent: b.parent,
                wait: match &b.wait {
                    Wait::None => "runnable".to_string(),
                    Wait::Cond { .. } => "event".to_string(),
                    Wait::Tick(t) => format!("tick:{t}"),
                    Wait::Join(n) => format!("join:{n}"),
                },
                depth: b.frames.len(),
                interrupts: b.interrupts.clone(),
            })
            .collect()
    }

    /// Applies one input, runs every branch until it blocks or finishes, and
    /// drains the outbox. Once the machine finished, events are still checked
    /// against the registry but otherwise ignored; ticks still move the clock.
    pub fn step(&mut self, input: Input) -> Result<Vec<Output>, InterpError> {
        match input {
            Input::Event(event) => {
                self.registry.check_event(&event)?;
                if !self.is_finished() {
                    self.deliver(event)?;
                }
            }
            Input::Tick => self.tick(),
            Input::None => {}
        }
        let result = self.run();
        self.env.clear_pulse();
        result?;
        Ok(self.drain())
    }

    pub fn run_to_quiescence(&mut self) -> Result<Vec<Output>, InterpError> {
        self.step(Input::None)
    }

    /// Outputs produced so far and not yet drained.
    pub fn drain(&mut self) -> Vec<Output> {
        self.outbox.drain(..).collect()
    }

    /// Marks an interruptible action as done so no cancel is issued for it.
    pub fn complete_interrupt(&mut self, command: u64) -> bool {
        for b in &mut self.branches {
            for h in &mut b.interrupts {
                if h.command == command && h.state == HandleState::Active {
                    h.state = HandleState::Completed;
                    return true;
                }
            }
        }
        false
    }

    fn deliver(&mut self, event: Event) -> Result<(), InterpError> {
        let derived = apply_rules(&event, &self.registry.rules)?;
        let retracted = retracted_events(&event, &self.registry.rules)?;
        let mut pulse = event.clone();
        pulse.seq = self.env.ingest_next(event);
        for name in &retracted {
            self.env.retract(SYMBOLIC_SENSOR, name);
        }
        for d in derived {
            self.env.ingest_next(d);
        }
        self.env.set_pulse(Some(pulse));

        let ctx = Ctx {
            env: &self.env,
            registry: &self.registry,
            threshold: self.config.threshold,
            clock: self.clock,
        };
        for branch in &mut self.branches {
            if let Wait::Cond { cond, body } = &branch.wait {
                if ctx.eval(cond, branch.id)? {
                    let body = body.clone();
                    branch.wait = Wait::None;
                    branch.frames.push(Frame::new(body, FrameKind::Block));
                }
            }
        }
        Ok(())
    }

    fn tick(&mut self) {
        self.clock += 1;
        for branch in &mut self.branches {
            if let Wait::Tick(t) = branch.wait {
                if t <= self.clock {
                    branch.wait = Wait::None;
                }
            }
        }
    }

    fn run(&mut self) -> Result<(), InterpError> {
        let mut points: u64 = 0;
        loop {
            let ready: Vec<u64> = self
                .branches
                .iter()
                .filter(|b| b.runnable())
                .map(|b| b.id)
                .collect();
            if ready.is_empty() {
                return Ok(());
            }
            for id in ready {
                points += 1;
                if points > self.config.step_budget {
                    return Err(InterpError::StepBudgetExceeded {
                        budget: self.config.step_budget,
                    });
                }
                self.exec_one(id)?;
            }
        }
    }

    fn index_of(&self, id: u64) -> Option<usize> {
        self.branches.binary_search_by_key(&id, |b| b.id).ok()
    }

    /// Executes one scheduling point of branch `id`.
    fn exec_one(&mut self, id: u64) -> Result<(), InterpError> {
        let Some(idx) = self.index_of(id) else {
            return Ok(());
        };
        let ctx = Ctx {
            env: &self.env,
            registry: &self.registry,
            threshold: self.config.threshold,
            clock: self.clock,
        };
        let effect = exec_branch(
            &mut self.branches[idx],
            &ctx,
            &mut self.outbox,
            &mut self.next_command,
        )?;
        match effect {
            Effect::Continue => {}
            Effect::Terminate => self.finish_branch(idx),
            Effect::Fork(blocks) => {
                let count = blocks.len();
                for block in blocks {
                    let child = Branch {
                        id: self.next_branch,
                        parent: Some(id),
                        frames: vec![Frame::new(block, FrameKind::Block)],
                        wait: Wait::None,
                        interrupts: Vec::new(),
                    };
                    self.next_branch += 1;
                    self.branches.push(child);
                }
                self.branches[idx].wait = Wait::Join(count);
            }
        }
        Ok(())
    }

    fn finish_branch(&mut self, idx: usize) {
        let branch = self.branches.remove(idx);
        for h in branch.interrupts {
            if h.state == HandleState::Active {
                self.outbox.push_back(Output::Cancel(CancelNotice {
                    command: h.command,
                    entity: h.entity,
                    function: h.function,
                    branch: branch.id,
                    at: self.clock,
                }));
            }
        }
        if let Some(parent) = branch.parent.and_then(|p| self.index_of(p)) {
            if let Wait::Join(n) = &mut self.branches[parent].wait {
                *n -= 1;
                if *n == 0 {
                    self.branches[parent].wait = Wait::None;
                }
            }
        }
    }
}

fn exec_branch(
    branch: &mut Branch,
    ctx: &Ctx<'_>,
    outbox: &mut VecDeque<Output>,
    next_command: &mut u64,
) -> Result<Effect, InterpError> {
    // unwind finished frames until an instruction is available
    let node = loop {
        let Some(frame) = branch.frames.last_mut() else {
            return Ok(Effect::Terminate);
        };
        if frame.index < frame.block.len() {
            let node = frame.block[frame.index].clone();
            frame.index += 1;
            break node;
        }
        let restart = match &mut frame.kind {
            FrameKind::Block => false,
            FrameKind::Repeat { remaining } => {
                *remaining -= 1;
                *remaining > 0
            }
            FrameKind::While { cond } => ctx.eval(cond, branch.id)?,
        };
        if restart {
            frame.index = 0;
            if frame.block.is_empty() {
                // an empty loop body still costs a scheduling point per pass
                return Ok(Effect::Continue);
            }
        } else {
            branch.frames.pop();
        }
    };

    match node {
        Node::Action {
            call,
            interruptible,
            span,
        } => {
            let cmd = command(&call, interruptible, span, branch.id, ctx, next_command)?;
            if interruptible {
                branch.interrupts.push(InterruptHandle {
                    command: cmd.id,
                    entity: cmd.entity.clone(),
                    function: cmd.function.clone(),
                    state: HandleState::Active,
                });
            }
            outbox.push_back(Output::Action(cmd));
        }
        Node::Repeat { count, body } => {
            if count > 0 {
                branch
                    .frames
                    .push(Frame::new(body, FrameKind::Repeat { remaining: count }));
            }
        }
        Node::While { cond, body } => {
            if ctx.eval(&cond, branch.id)? {
                branch.frames.push(Frame::new(body, FrameKind::While { cond }));
            }
        }
        Node::Conditional {
            cond,
            then_body,
            else_body,
        } => {
            if ctx.eval(&cond, branch.id)? {
                branch.frames.push(Frame::new(then_body, FrameKind::Block));
            } else if let Some(else_body) = else_body {
                branch.frames.push(Frame::new(else_body, FrameKind::Block));
            }
        }
        Node::EventWait { cond, body } => {
            branch.wait = Wait::Cond { cond, body };
        }
        Node::Parallel(blocks) => return Ok(Effect::Fork(blocks)),
        Node::Timer(duration) => {
            if duration > 0 {
                branch.wait = Wait::Tick(ctx.clock + u64::from(duration));
            }
        }
        Node::Break => loop {
            match branch.frames.pop() {
                None => return Ok(Effect::Terminate),
                Some(Frame {
                    kind: FrameKind::Repeat { .. } | FrameKind::While { .. },
                    ..
                }) => break,
                Some(_) => {}
            }
        },
        Node::MacroCall { name, span } => {
            return Err(InterpError::Runtime {
                branch: branch.id,
                span,
                reason: format!("unexpanded macro `@{name}`"),
            })
        }
    }
    Ok(Effect::Continue)
}

fn command(
    call: &Call,
    interruptible: bool,
    span: Span,
    branch: u64,
    ctx: &Ctx<'_>,
    next_command: &mut u64,
) -> Result<ActionCommand, InterpError> {
    let runtime = |reason: String| InterpError::Runtime {
        branch,
        span,
        reason,
    };
    let decl = ctx
        .registry
        .entity(&call.target)
        .and_then(|e| e.function(&call.function))
        .ok_or_else(|| runtime(format!("`{}.{}` is not an entity function", call.target, call.function)))?;
    if decl.kind != CallKind::Procedure {
        return Err(runtime(format!(
            "`{}.{}` is a {} function, expected a procedure",
            call.target, call.function, decl.kind
        )));
    }
    if call.args.len() != usize::from(decl.arity) {
        return Err(runtime(format!(
            "`{}.{}` takes {} argument(s)",
            call.target, call.function, decl.arity
        )));
    }
    let arg = match call.arg() {
        None => None,
        Some(var) => {
            let value = read_variable(var, ctx.env, ctx.registry, ctx.threshold)
                .map_err(|e| runtime(e.to_string()))?;
            Some(value.ok_or_else(|| runtime("argument reads a channel with no reading yet".to_string()))?)
        }
    };
    let id = *next_command;
    *next_command += 1;
    Ok(ActionCommand {
        id,
        entity: call.target.clone(),
        function: call.function.clone(),
        arg,
        issued_at: ctx.clock,
        branch,
        interruptible,
    })
}
